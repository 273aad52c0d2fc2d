"""Quick invariant checks behind `platoonrl selftest`."""

from __future__ import annotations

import numpy as np

from . import baselines
from . import environment as env
from .ddqn import Agent, Experience, ReplayBuffer, TrainConfig, select_action
from .mdp import RewardWeights, decode_action, encode_action, observation_dim
from .training import train_episode


def check_common_reward(seed: int = 0) -> tuple[bool, str]:
    cfg = env.EnvConfig(n_v2n=2, payload_bytes=8 * 1060)
    tcfg = TrainConfig(batch_size=4, buffer_capacity=1000, reward_scale=1.0)
    rng = np.random.default_rng(seed)
    agents = [Agent.create(observation_dim(cfg), cfg.n_actions, tcfg, rng) for _ in range(cfg.n_platoons)]
    rngs = {k: np.random.default_rng([seed, i]) for i, k in enumerate(("env", "act", "learn"))}
    checked = 0
    for e in range(20):
        before = [len(a.buffer) for a in agents]
        train_episode(agents, cfg, tcfg, RewardWeights(), rngs, e, 1000)
        firsts = [a.buffer.contents()[b] for a, b in zip(agents, before)]
        live = [x.reward for x in firsts if not x.terminal]
        if len(live) > 1:
            checked += 1
            if any(r != live[0] for r in live):
                return False, f"episode {e}: agents saw different rewards {live}"
    return checked > 0, f"{checked} episodes with identical per-agent rewards"


def check_replay() -> tuple[bool, str]:
    buf = ReplayBuffer(2)
    for k in range(3):
        buf.push(Experience(np.array([k], float), 0, float(k), np.array([k], float), False))
    if [x.reward for x in buf.contents()] != [1.0, 2.0]:
        return False, "FIFO eviction failed"
    big = ReplayBuffer(100)
    for k in range(100):
        big.push(Experience(np.array([k], float), 0, float(k), np.array([k], float), False))
    rng = np.random.default_rng(1)
    idx = np.concatenate([big.sample_indices(100, rng) for _ in range(1000)])
    freq = np.bincount(idx, minlength=100) / idx.size
    dev = float(np.max(np.abs(freq - 0.01)))
    return dev <= 0.003, f"max frequency deviation {dev:.4f}"


def check_epsilon_greedy() -> tuple[bool, str]:
    q = np.array([0.1, 0.7, 0.3, 0.2, -1.0, 0.0, 0.5, 0.6])
    rng = np.random.default_rng(2)
    worst = 0.0
    for eps in (0.25, 0.5):
        draws = np.array([select_action(q, eps, rng) for _ in range(100_000)])
        freq = np.bincount(draws, minlength=q.size) / draws.size
        expect = np.full(q.size, eps / q.size)
        expect[np.argmax(q)] += 1 - eps
        worst = max(worst, float(np.max(np.abs(freq - expect))))
    return worst <= 0.01, f"max frequency deviation {worst:.4f}"


def check_action_bijection() -> tuple[bool, str]:
    for m in (1, 2, 3):
        for p in (1, 4):
            seen = set()
            for idx in range(m * p):
                a = decode_action(idx, m, p)
                if encode_action(a, m, p) != idx:
                    return False, f"round trip failed at {idx} (M={m}, |A_p|={p})"
                seen.add(a)
            if len(seen) != m * p:
                return False, "decode is not injective"
    return True, "encode/decode round-trip over all action sets"


def check_payload_accounting(seed: int = 3) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    steps = 0
    for k in range(20):
        cfg = env.EnvConfig(n_v2n=1 + k % 2, payload_bytes=(2 + k % 6) * 1060)
        episode = env.reset_episode(cfg, np.random.default_rng([seed, k]))
        while not episode.done:
            before = episode.payload.remaining_bits.copy()
            active = episode.payload.active.copy()
            out = env.step(episode, baselines.random_step(episode, rng))
            expect = np.where(active[:, None], np.maximum(0.0, before - out.v2v_rates * cfg.step_ms * 1e-3), before)
            if not np.array_equal(expect, out.payload.remaining_bits):
                return False, f"episode {k} step {steps}: remaining bits mismatch"
            if np.any(out.payload.remaining_bits > before):
                return False, "remaining bits increased"
            steps += 1
    return True, f"{steps} steps exact"


CHECKS = {
    "common_reward": check_common_reward,
    "replay_fifo_uniform": check_replay,
    "epsilon_greedy": check_epsilon_greedy,
    "action_bijection": check_action_bijection,
    "payload_accounting": check_payload_accounting,
}


def run_selftest(stream=None) -> bool:
    ok = True
    for name, fn in CHECKS.items():
        passed, detail = fn()
        ok &= passed
        if stream is not None:
            print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}", file=stream)
    return ok
