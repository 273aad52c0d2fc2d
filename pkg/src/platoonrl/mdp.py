"""Observations, the discrete action space and the shared reward."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .environment import EnvConfig, Episode

GAIN_DB_MEAN = -100.0
GAIN_DB_SCALE = 30.0
_TINY = 1e-30


class Action(NamedTuple):
    sub_band: int
    power_level: int


@dataclass
class RewardWeights:
    w_c: float = 0.7
    w_d: float = 0.3
    w_t: float = 0.25
    U: float = 50.0


def observation_dim(config: EnvConfig) -> int:
    v, n, m = config.members_per_platoon, config.n_platoons, config.n_v2n
    return v + v * (n - 1) + v * m + m + 2 + 2


def encode_action(a: Action, n_v2n: int, n_power: int) -> int:
    if not (0 <= a.sub_band < n_v2n and 0 <= a.power_level < n_power):
        raise ValueError(f"action {a} out of range")
    return a.sub_band * n_power + a.power_level


def decode_action(index: int, n_v2n: int, n_power: int) -> Action:
    if not 0 <= index < n_v2n * n_power:
        raise ValueError(f"action index {index} out of range [0, {n_v2n * n_power})")
    return Action(*divmod(int(index), n_power))


def gain_feature(gain) -> np.ndarray:
    """Linear power gain -> standardized dB feature."""
    db = 10.0 * np.log10(np.maximum(np.asarray(gain, dtype=float), _TINY))
    return (db - GAIN_DB_MEAN) / GAIN_DB_SCALE


def build_observation(episode: Episode, n: int, e: float, epsilon: float) -> np.ndarray:
    """Local state of agent n from the previous step's channel measurements.

    Layout: direct gains (V), co-channel interferer gains ((N-1)*V, zero when
    the other leader was not on our sub-band), V2N-user-to-member gains (M*V),
    own gain to the BS per sub-band (M), remaining payload and time fractions,
    and the (episode, epsilon) fingerprint.  `e` is already normalized.
    """
    cfg = episode.config
    g = episode.prev_gains
    others = [l for l in range(cfg.n_platoons) if l != n]

    direct = gain_feature(g.dd[n, n])
    interf = np.zeros((len(others), cfg.members_per_platoon))
    prev = episode.prev_assignment
    if prev is not None:
        bands = prev.sub_bands
        was_active = episode.prev_active
        for k, l in enumerate(others):
            if was_active[l] and was_active[n] and bands[l] == bands[n]:
                interf[k] = gain_feature(g.dd[l, n])
    v2n_member = gain_feature(g.cd[:, n, :]).ravel()
    to_bs = gain_feature(g.dc[n])

    remaining = float(np.mean(episode.payload.remaining_bits[n])) / cfg.payload_bits
    time_left = episode.remaining_time_ms / cfg.latency_ms
    return np.concatenate([
        direct, interf.ravel(), v2n_member, to_bs,
        [remaining, time_left, e, epsilon],
    ])


def v2v_utility(rate, remaining_bits, U: float, bandwidth_hz: float):
    """Spectral efficiency while payload remains, the constant U once delivered."""
    rate = np.asarray(rate, dtype=float)
    remaining = np.asarray(remaining_bits, dtype=float)
    out = np.where(remaining > 0, rate / bandwidth_hz, U)
    return float(out) if out.ndim == 0 else out


def compute_reward(v2n_rates, v2v_utilities, steps_elapsed: int, weights: RewardWeights,
                   config: EnvConfig) -> float:
    """Common reward; `steps_elapsed` counts the steps taken before this one."""
    elapsed_ms = steps_elapsed * config.step_ms
    return float(
        weights.w_c * np.sum(np.asarray(v2n_rates) / config.bandwidth_hz)
        + weights.w_d * np.sum(v2v_utilities)
        - weights.w_t * elapsed_ms
    )


def step_reward(outcome, weights: RewardWeights, config: EnvConfig) -> float:
    """Reward for a finished `environment.step` call."""
    utilities = v2v_utility(outcome.v2v_rates, outcome.payload.remaining_bits, weights.U, config.bandwidth_hz)
    return compute_reward(outcome.v2n_rates, utilities, outcome.payload.steps_elapsed - 1, weights, config)


def idle_rewards(v2n_rate_list, first_step: int, weights: RewardWeights, config: EnvConfig) -> list[float]:
    """Rewards of the silent tail produced by `Episode.drain`."""
    links = config.n_platoons * config.members_per_platoon
    full = np.full(links, weights.U)
    return [compute_reward(r, full, first_step + k, weights, config) for k, r in enumerate(v2n_rate_list)]
