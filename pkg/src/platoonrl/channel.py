"""Topology drops and large/small-scale channel gains for a single urban cell.

The base station sits at the origin of a square region crossed by a grid of
two-way streets.  V2N users and platoons are dropped uniformly on the lanes.
Path loss follows the usual urban-macro curve for V2N links and the LOS
V2V curve for vehicle-to-vehicle links; shadowing is log-normal and small-scale
fading is Rayleigh (unit-mean exponential power gain).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KMH_TO_MS = 1.0 / 3.6


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    lane_id: int = -1


@dataclass(frozen=True)
class Lane:
    """Straight lane spanning the region; `direction` is +1/-1 along its axis."""

    lane_id: int
    horizontal: bool
    offset: float
    direction: int

    def point(self, s: float) -> tuple[float, float]:
        if self.horizontal:
            return s, self.offset
        return self.offset, s


@dataclass
class PlatoonLayout:
    leader: Position
    members: list[Position]
    velocity: float


@dataclass
class Topology:
    bs_position: Position
    v2n_users: list[Position]
    platoons: list[PlatoonLayout]
    velocities: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def user_xy(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.v2n_users], dtype=float).reshape(-1, 2)

    @property
    def leader_xy(self) -> np.ndarray:
        return np.array([[p.leader.x, p.leader.y] for p in self.platoons], dtype=float).reshape(-1, 2)

    @property
    def member_xy(self) -> np.ndarray:
        """Array of shape (N, V, 2)."""
        return np.array([[[m.x, m.y] for m in p.members] for p in self.platoons], dtype=float)


@dataclass
class LargeScale:
    """Path loss and shadowing in dB; arrays broadcast elementwise."""

    pathloss_db: np.ndarray | float
    shadowing_db: np.ndarray | float


@dataclass
class LinkGains:
    """Linear power gains for one time step.

    cc: (M,)      V2N user m -> BS on sub-band m
    dc: (N, M)    platoon leader n -> BS on sub-band m
    dd: (N, N, V) leader l -> member i of platoon n (dd[n, n] is the direct link)
    cd: (M, N, V) V2N user m -> member i of platoon n
    """

    cc: np.ndarray
    dc: np.ndarray
    dd: np.ndarray
    cd: np.ndarray


@dataclass
class EpisodeLargeScale:
    cc: LargeScale
    dc: LargeScale
    dd: LargeScale
    cd: LargeScale


def build_lanes(config) -> list[Lane]:
    lanes = []
    w = config.lane_width_m
    k = config.lanes_per_direction
    for horizontal in (True, False):
        for road in config.road_offsets_m:
            for j in range(k):
                d = (j + 0.5) * w
                lanes.append(Lane(len(lanes), horizontal, road - d, +1))
                lanes.append(Lane(len(lanes), horizontal, road + d, -1))
    return lanes


def _platoon_span(config) -> float:
    n_veh = config.members_per_platoon + 1
    return n_veh * config.vehicle_length_m + (n_veh - 1) * config.vehicle_gap_m


def drop_topology(config, rng: np.random.Generator, max_tries: int = 1000) -> Topology:
    """Drop V2N users and platoons uniformly on the lane grid.

    Vehicles sharing a lane never overlap; the leader drives in front and each
    member trails by one vehicle length plus the inter-vehicle gap.
    """
    if config.n_v2n < 1:
        raise ValueError("at least one sub-band (V2N link) is required")
    if config.n_platoons < 1:
        raise ValueError("at least one platoon is required")
    half = config.region_half_m
    lane_len = 2.0 * half
    span = _platoon_span(config)
    if span > lane_len:
        raise ValueError(f"platoon length {span} m exceeds lane length {lane_len} m")
    for road in config.road_offsets_m:
        if abs(road) + config.lanes_per_direction * config.lane_width_m > half:
            raise ValueError(f"road at offset {road} m leaves the region")

    lanes = build_lanes(config)
    spacing = config.vehicle_length_m + config.vehicle_gap_m
    occupied: dict[int, list[tuple[float, float]]] = {}

    def place(length: float) -> tuple[Lane, float]:
        # s is the midpoint of the front vehicle along the lane axis
        for _ in range(max_tries):
            lane = lanes[rng.integers(len(lanes))]
            lo = -half + length - config.vehicle_length_m / 2
            hi = half - config.vehicle_length_m / 2
            s = rng.uniform(lo, hi)
            if lane.direction < 0:
                s = -s
            tail = s - lane.direction * (length - config.vehicle_length_m)
            extent = (min(s, tail) - config.vehicle_length_m / 2 - config.vehicle_gap_m,
                      max(s, tail) + config.vehicle_length_m / 2 + config.vehicle_gap_m)
            taken = occupied.setdefault(lane.lane_id, [])
            if all(extent[1] <= a or extent[0] >= b for a, b in taken):
                taken.append(extent)
                return lane, s
        raise RuntimeError("could not place vehicles without overlap; enlarge the region")

    lo_v, hi_v = config.velocity_kmh
    users = []
    velocities = []
    for _ in range(config.n_v2n):
        lane, s = place(config.vehicle_length_m)
        users.append(Position(*lane.point(s), lane.lane_id))
        velocities.append(rng.uniform(lo_v, hi_v) * KMH_TO_MS)

    platoons = []
    for _ in range(config.n_platoons):
        lane, s = place(span)
        leader = Position(*lane.point(s), lane.lane_id)
        members = [
            Position(*lane.point(s - lane.direction * spacing * (i + 1)), lane.lane_id)
            for i in range(config.members_per_platoon)
        ]
        v = rng.uniform(lo_v, hi_v) * KMH_TO_MS
        platoons.append(PlatoonLayout(leader, members, v))
        velocities.extend([v] * (config.members_per_platoon + 1))

    return Topology(Position(0.0, 0.0), users, platoons, np.asarray(velocities))


def v2n_pathloss(distance, min_distance: float = 10.0):
    """Urban-macro V2N path loss in dB, 128.1 + 37.6 log10(d_km)."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    pl = 128.1 + 37.6 * np.log10(np.maximum(d, min_distance) / 1000.0)
    return float(pl) if pl.ndim == 0 else pl


def v2v_pathloss(distance, carrier_ghz: float = 2.0, min_distance: float = 3.0):
    """LOS V2V path loss in dB, 38.77 + 16.7 log10(d_m) + 18.2 log10(f_GHz)."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    pl = 38.77 + 16.7 * np.log10(np.maximum(d, min_distance)) + 18.2 * np.log10(carrier_ghz)
    return float(pl) if pl.ndim == 0 else pl


def sample_shadowing(rng: np.random.Generator, std_db: float, size=None):
    if std_db < 0:
        raise ValueError("std_db must be nonnegative")
    return rng.normal(0.0, std_db, size)


def sample_small_scale(rng: np.random.Generator, size=None):
    return rng.exponential(1.0, size)


def combined_gain(large: LargeScale, small) -> np.ndarray:
    return 10.0 ** ((-np.asarray(large.pathloss_db) + np.asarray(large.shadowing_db)) / 10.0) * np.asarray(small)


def _dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.maximum(np.linalg.norm(a - b, axis=-1), 1e-9)


def draw_large_scale(config, topo: Topology, rng: np.random.Generator) -> EpisodeLargeScale:
    bs = np.array([topo.bs_position.x, topo.bs_position.y])
    users = topo.user_xy
    leaders = topo.leader_xy
    members = topo.member_xy
    n, v = members.shape[:2]
    m = users.shape[0]

    pl_cc = v2n_pathloss(_dist(users, bs), config.v2n_min_distance_m)
    pl_dc = v2n_pathloss(_dist(leaders, bs), config.v2n_min_distance_m)
    pl_dd = v2v_pathloss(_dist(leaders[:, None, None, :], members[None, :, :, :]),
                         config.carrier_ghz, config.v2v_min_distance_m)
    pl_cd = v2v_pathloss(_dist(users[:, None, None, :], members[None, :, :, :]),
                         config.carrier_ghz, config.v2v_min_distance_m)
    return EpisodeLargeScale(
        cc=LargeScale(np.atleast_1d(pl_cc), sample_shadowing(rng, config.v2n_shadow_std_db, m)),
        dc=LargeScale(np.atleast_1d(pl_dc), sample_shadowing(rng, config.v2n_shadow_std_db, n)),
        dd=LargeScale(pl_dd.reshape(n, n, v), sample_shadowing(rng, config.v2v_shadow_std_db, (n, n, v))),
        cd=LargeScale(pl_cd.reshape(m, n, v), sample_shadowing(rng, config.v2v_shadow_std_db, (m, n, v))),
    )


def draw_gains(large: EpisodeLargeScale, rng: np.random.Generator) -> LinkGains:
    """Fresh Rayleigh draw on top of the frozen large-scale values."""
    m = large.cc.pathloss_db.shape[0]
    n = large.dc.pathloss_db.shape[0]
    dc_large = LargeScale(large.dc.pathloss_db[:, None], large.dc.shadowing_db[:, None])
    return LinkGains(
        cc=combined_gain(large.cc, sample_small_scale(rng, m)),
        dc=combined_gain(dc_large, sample_small_scale(rng, (n, m))),
        dd=combined_gain(large.dd, sample_small_scale(rng, large.dd.pathloss_db.shape)),
        cd=combined_gain(large.cd, sample_small_scale(rng, large.cd.pathloss_db.shape)),
    )
