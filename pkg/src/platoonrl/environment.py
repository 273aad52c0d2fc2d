"""Episode state, SINR/rate computation and payload bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import channel
from .channel import EpisodeLargeScale, LinkGains, Topology


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def mw_to_dbm(mw):
    return 10.0 * np.log10(np.asarray(mw, dtype=float))


@dataclass
class EnvConfig:
    n_v2n: int = 2
    n_platoons: int = 4
    members_per_platoon: int = 3
    bandwidth_hz: float = 1e6
    v2n_power_dbm: float = 23.0
    power_levels_dbm: tuple[float, ...] = (23.0, 10.0, 5.0, -100.0)
    thermal_noise_dbm_hz: float = -174.0
    bs_noise_figure_db: float = 5.0
    vehicle_noise_dbm: float = -114.0
    latency_ms: float = 10.0
    step_ms: float = 1.0
    payload_bytes: int = 8 * 1060
    carrier_ghz: float = 2.0
    v2n_shadow_std_db: float = 8.0
    v2v_shadow_std_db: float = 3.0
    v2n_min_distance_m: float = 10.0
    v2v_min_distance_m: float = 3.0
    vehicle_length_m: float = 4.0
    vehicle_gap_m: float = 1.0
    velocity_kmh: tuple[float, float] = (36.0, 54.0)
    region_half_m: float = 1000.0
    road_offsets_m: tuple[float, ...] = (-875.0, -625.0, -375.0, -125.0, 125.0, 375.0, 625.0, 875.0)
    lanes_per_direction: int = 2
    lane_width_m: float = 3.5

    def __post_init__(self):
        self.power_levels_dbm = tuple(float(p) for p in self.power_levels_dbm)
        self.velocity_kmh = tuple(float(v) for v in self.velocity_kmh)
        self.road_offsets_m = tuple(float(r) for r in self.road_offsets_m)
        if self.step_ms <= 0 or self.latency_ms < self.step_ms:
            raise ValueError("need 0 < step_ms <= latency_ms")
        if not self.power_levels_dbm:
            raise ValueError("power_levels_dbm must be nonempty")

    @property
    def bs_noise_dbm(self) -> float:
        return self.thermal_noise_dbm_hz + 10.0 * math.log10(self.bandwidth_hz) + self.bs_noise_figure_db

    @property
    def payload_bits(self) -> float:
        return 8.0 * self.payload_bytes

    @property
    def horizon(self) -> int:
        """Number of coherence steps inside the latency budget."""
        return int(round(self.latency_ms / self.step_ms))

    @property
    def n_actions(self) -> int:
        return self.n_v2n * len(self.power_levels_dbm)


@dataclass
class Assignment:
    rho: np.ndarray        # (N, M) 0/1, one 1 per row
    power_dbm: np.ndarray  # (N,)

    @classmethod
    def from_choices(cls, sub_bands, power_dbm, n_v2n: int) -> "Assignment":
        sub_bands = np.asarray(sub_bands, dtype=int)
        rho = np.zeros((len(sub_bands), n_v2n), dtype=int)
        rho[np.arange(len(sub_bands)), sub_bands] = 1
        return cls(rho, np.asarray(power_dbm, dtype=float))

    @property
    def sub_bands(self) -> np.ndarray:
        return np.argmax(self.rho, axis=1)


@dataclass
class PayloadState:
    remaining_bits: np.ndarray  # (N, V)
    steps_elapsed: int
    active: np.ndarray          # (N,) bool


@dataclass
class StepOutcome:
    v2n_rates: np.ndarray
    v2v_rates: np.ndarray
    payload: PayloadState
    done: bool
    # remaining bits before this step's decrement, needed for utilities
    remaining_before: np.ndarray | None = None
    active_before: np.ndarray | None = None


def _active(assignment: Assignment, active) -> np.ndarray:
    if active is None:
        return np.ones(assignment.rho.shape[0], dtype=bool)
    return np.asarray(active, dtype=bool)


def v2n_sinrs(config: EnvConfig, gains: LinkGains, assignment: Assignment, active=None) -> np.ndarray:
    """SINR of every V2N link; inactive platoons do not interfere."""
    act = _active(assignment, active)
    p_leader = dbm_to_mw(assignment.power_dbm) * act
    interference = np.einsum("nm,n,nm->m", assignment.rho, p_leader, gains.dc)
    return dbm_to_mw(config.v2n_power_dbm) * gains.cc / (interference + dbm_to_mw(config.bs_noise_dbm))


def v2v_sinrs(config: EnvConfig, gains: LinkGains, assignment: Assignment, active=None) -> np.ndarray:
    """SINR of every leader->member link, shape (N, V); zero for inactive platoons."""
    act = _active(assignment, active)
    bands = assignment.sub_bands
    p_leader = dbm_to_mw(assignment.power_dbm) * act
    n = len(bands)
    idx = np.arange(n)
    signal = p_leader[:, None] * gains.dd[idx, idx]
    v2n_int = dbm_to_mw(config.v2n_power_dbm) * gains.cd[bands, idx]
    co = (bands[:, None] == bands[None, :]) & ~np.eye(n, dtype=bool)  # co[l, n]
    v2v_int = np.einsum("ln,l,lnv->nv", co.astype(float), p_leader, gains.dd)
    sinr = signal / (v2n_int + v2v_int + dbm_to_mw(config.vehicle_noise_dbm))
    return sinr * act[:, None]


def compute_v2n_sinr(config: EnvConfig, gains: LinkGains, assignment: Assignment, m: int, active=None) -> float:
    """SINR of V2N link m (the user owning sub-band m)."""
    if not 0 <= m < config.n_v2n:
        raise IndexError(f"sub-band {m} out of range")
    act = _active(assignment, active)
    interference = 0.0
    for n in range(assignment.rho.shape[0]):
        if act[n] and assignment.rho[n, m]:
            interference += float(dbm_to_mw(assignment.power_dbm[n])) * gains.dc[n, m]
    return float(dbm_to_mw(config.v2n_power_dbm)) * gains.cc[m] / (interference + float(dbm_to_mw(config.bs_noise_dbm)))


def compute_v2v_sinr(config: EnvConfig, gains: LinkGains, assignment: Assignment, n: int, i: int,
                     active=None) -> float:
    """SINR at member i of platoon n; only co-channel transmitters interfere."""
    act = _active(assignment, active)
    m = int(np.argmax(assignment.rho[n]))
    signal = float(dbm_to_mw(assignment.power_dbm[n])) * gains.dd[n, n, i]
    interference = assignment.rho[n, m] * float(dbm_to_mw(config.v2n_power_dbm)) * gains.cd[m, n, i]
    for l in range(assignment.rho.shape[0]):
        if l != n and act[l] and assignment.rho[l, m]:
            interference += float(dbm_to_mw(assignment.power_dbm[l])) * gains.dd[l, n, i]
    return signal / (interference + float(dbm_to_mw(config.vehicle_noise_dbm)))


def achievable_rate(sinr, bandwidth_hz: float):
    """Shannon rate in bits/s."""
    return bandwidth_hz * np.log1p(np.asarray(sinr, dtype=float)) / np.log(2.0)


@dataclass
class Episode:
    """Mutable state of one episode.

    Small-scale fading is drawn from the episode's own generator every step,
    independent of the actions taken, so two allocators run on the same seed
    see identical channels.
    """

    config: EnvConfig
    topology: Topology
    large: EpisodeLargeScale
    gains: LinkGains
    prev_gains: LinkGains
    payload: PayloadState
    rng: np.random.Generator
    prev_assignment: Assignment | None = None
    prev_active: np.ndarray | None = None
    v2n_history: list = field(default_factory=list)
    clean_v2n_history: list = field(default_factory=list)
    gains_history: list = field(default_factory=list)

    @property
    def done(self) -> bool:
        return self.payload.steps_elapsed >= self.config.horizon or not self.payload.active.any()

    @property
    def remaining_time_ms(self) -> float:
        return self.config.latency_ms - self.payload.steps_elapsed * self.config.step_ms

    def _advance_fading(self):
        self.prev_gains = self.gains
        self.gains = channel.draw_gains(self.large, self.rng)

    def drain(self) -> list[np.ndarray]:
        """Run the leftover steps up to the latency budget with every platoon silent.

        Returns the V2N rate vectors of those steps.  Used so that metrics and
        returns cover the full horizon even after every payload is delivered.
        """
        rates = []
        silent = Assignment.from_choices(np.zeros(self.config.n_platoons, int),
                                         np.full(self.config.n_platoons, -np.inf), self.config.n_v2n)
        idle = np.zeros(self.config.n_platoons, dtype=bool)
        while self.payload.steps_elapsed < self.config.horizon:
            r = achievable_rate(v2n_sinrs(self.config, self.gains, silent, idle), self.config.bandwidth_hz)
            rates.append(r)
            self.v2n_history.append(r)
            self.clean_v2n_history.append(r)
            self.gains_history.append(self.gains)
            self.payload.steps_elapsed += 1
            self._advance_fading()
        return rates


def reset_episode(config: EnvConfig, rng: np.random.Generator) -> Episode:
    topo = channel.drop_topology(config, rng)
    large = channel.draw_large_scale(config, topo, rng)
    # one extra draw stands in for the measurement taken before the first step
    prev = channel.draw_gains(large, rng)
    gains = channel.draw_gains(large, rng)
    payload = PayloadState(
        remaining_bits=np.full((config.n_platoons, config.members_per_platoon), config.payload_bits),
        steps_elapsed=0,
        active=np.ones(config.n_platoons, dtype=bool),
    )
    return Episode(config, topo, large, gains, prev, payload, rng)


def joint_action_to_assignment(config: EnvConfig, joint_action, active) -> Assignment:
    """Turn one (sub_band, power_level) per platoon into an Assignment.

    Inactive platoons may pass None; they are placed on sub-band 0 and never
    counted because they are masked out by `active`.
    """
    if len(joint_action) != config.n_platoons:
        raise ValueError(f"expected {config.n_platoons} actions, got {len(joint_action)}")
    bands = np.zeros(config.n_platoons, dtype=int)
    power = np.full(config.n_platoons, -np.inf)
    for n, a in enumerate(joint_action):
        if a is None:
            if active[n]:
                raise ValueError(f"active platoon {n} has no action")
            continue
        if not 0 <= a.sub_band < config.n_v2n or not 0 <= a.power_level < len(config.power_levels_dbm):
            raise ValueError(f"action {a} out of range")
        bands[n] = a.sub_band
        power[n] = config.power_levels_dbm[a.power_level]
    return Assignment.from_choices(bands, power, config.n_v2n)


def step(episode: Episode, joint_action) -> StepOutcome:
    """Advance one coherence interval under the joint action."""
    if episode.done:
        raise RuntimeError("episode already finished")
    cfg = episode.config
    pay = episode.payload
    active = pay.active.copy()
    assignment = joint_action_to_assignment(cfg, joint_action, active)

    v2n = achievable_rate(v2n_sinrs(cfg, episode.gains, assignment, active), cfg.bandwidth_hz)
    v2v = achievable_rate(v2v_sinrs(cfg, episode.gains, assignment, active), cfg.bandwidth_hz)
    idle = np.zeros_like(active)
    clean = achievable_rate(v2n_sinrs(cfg, episode.gains, assignment, idle), cfg.bandwidth_hz)

    before = pay.remaining_bits.copy()
    sent = v2v * (cfg.step_ms * 1e-3) * active[:, None]
    pay.remaining_bits = np.maximum(0.0, before - sent)
    pay.active = active & (pay.remaining_bits > 0).any(axis=1)
    pay.steps_elapsed += 1

    episode.v2n_history.append(v2n)
    episode.clean_v2n_history.append(clean)
    episode.gains_history.append(episode.gains)
    episode.prev_assignment = assignment
    episode.prev_active = active
    episode._advance_fading()

    snapshot = PayloadState(pay.remaining_bits.copy(), pay.steps_elapsed, pay.active.copy())
    return StepOutcome(v2n, v2v, snapshot, episode.done, before, active)


def delivery_success(payload: PayloadState) -> np.ndarray:
    """Per-link success flags: the whole payload arrived within the budget."""
    return payload.remaining_bits <= 0.0
