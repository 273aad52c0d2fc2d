"""Centralized exhaustive search and random allocation."""

from __future__ import annotations

import numpy as np

from .environment import Episode, achievable_rate, dbm_to_mw
from .mdp import Action, decode_action

DEFAULT_CANDIDATE_CAP = 1 << 16


def _digits(indices, n_active: int, n_actions: int) -> np.ndarray:
    """Mixed-radix digits, first active platoon most significant. Shape (K, Na)."""
    idx = np.atleast_1d(np.asarray(indices, dtype=int))
    out = np.empty((len(idx), n_active), dtype=int)
    for j in range(n_active - 1, -1, -1):
        idx, out[:, j] = np.divmod(idx, n_actions)
    return out


def joint_objectives(episode: Episode, active_ids: np.ndarray, flat_actions: np.ndarray) -> np.ndarray:
    """Sum-rate (V2N + undelivered V2V) for each candidate joint action.

    flat_actions has shape (K, Na): one flat action per active platoon.
    Uses the current-step gains, i.e. global CSI.
    """
    cfg = episode.config
    g = episode.gains
    n_pow = len(cfg.power_levels_dbm)
    bands = flat_actions // n_pow
    p = dbm_to_mw(np.asarray(cfg.power_levels_dbm))[flat_actions % n_pow]  # (K, Na)
    k = flat_actions.shape[0]
    ids = active_ids

    # V2N: interference on sub-band m from active leaders that chose m
    onehot = (bands[:, :, None] == np.arange(cfg.n_v2n)[None, None, :]).astype(float)          # (K, Na, M)
    dc = g.dc[ids]                                                               # (Na, M)
    interf_c = np.einsum("knm,kn,nm->km", onehot, p, dc)
    sinr_c = dbm_to_mw(cfg.v2n_power_dbm) * g.cc[None, :] / (interf_c + dbm_to_mw(cfg.bs_noise_dbm))
    total = achievable_rate(sinr_c, cfg.bandwidth_hz).sum(axis=1)

    # V2V: members of each active platoon
    dd = g.dd[np.ix_(ids, ids)]                                                  # (Na_l, Na_n, V)
    direct = dd[np.arange(len(ids)), np.arange(len(ids))]                        # (Na, V)
    signal = p[:, :, None] * direct[None]
    cd = g.cd[:, ids, :]                                                         # (M, Na, V)
    v2n_int = dbm_to_mw(cfg.v2n_power_dbm) * cd[bands, np.arange(len(ids))[None, :]]  # (K, Na, V)
    co = ((bands[:, :, None] == bands[:, None, :]) & ~np.eye(len(ids), dtype=bool)[None]).astype(float)  # (K, l, n)
    v2v_int = np.einsum("kln,kl,lnv->knv", co, p, dd)
    sinr_d = signal / (v2n_int + v2v_int + dbm_to_mw(cfg.vehicle_noise_dbm))
    pending = episode.payload.remaining_bits[ids] > 0                            # (Na, V)
    total = total + (achievable_rate(sinr_d, cfg.bandwidth_hz) * pending[None]).sum(axis=(1, 2))
    assert total.shape == (k,)
    return total


def exhaustive_step(episode: Episode, weights=None, cap: int = DEFAULT_CANDIDATE_CAP,
                    chunk: int = 4096) -> list[Action | None]:
    """Best joint action for the current step by full enumeration.

    `weights` is accepted for interface symmetry; the objective is the
    unweighted V2N + V2V sum-rate.  Ties go to the lowest joint index.
    """
    cfg = episode.config
    ids = np.flatnonzero(episode.payload.active)
    n_actions = cfg.n_actions
    joint: list[Action | None] = [None] * cfg.n_platoons
    if len(ids) == 0:
        return joint
    n_cand = n_actions ** len(ids)
    if n_cand > cap:
        raise ValueError(f"{n_cand} joint actions exceed the cap of {cap}; use fewer platoons or actions")
    best_val, best_idx = -np.inf, -1
    for start in range(0, n_cand, chunk):
        stop = min(n_cand, start + chunk)
        digits = _digits(np.arange(start, stop), len(ids), n_actions)
        vals = joint_objectives(episode, ids, digits)
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best_val, best_idx = vals[j], start + j
    best = _digits(best_idx, len(ids), n_actions)[0]
    n_pow = len(cfg.power_levels_dbm)
    for n, a in zip(ids, best):
        joint[n] = decode_action(int(a), cfg.n_v2n, n_pow)
    return joint


def random_step(episode: Episode, rng: np.random.Generator) -> list[Action | None]:
    """Independent uniform sub-band and power level for every active platoon."""
    cfg = episode.config
    joint: list[Action | None] = [None] * cfg.n_platoons
    for n in np.flatnonzero(episode.payload.active):
        joint[n] = Action(int(rng.integers(cfg.n_v2n)), int(rng.integers(len(cfg.power_levels_dbm))))
    return joint
