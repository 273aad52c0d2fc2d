"""Episode rollouts for arbitrary allocators and the multi-agent DDQN training episode."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import environment as env
from .ddqn import Agent, Experience, TrainConfig, q_forward
from .mdp import RewardWeights, build_observation, decode_action, idle_rewards, step_reward

Policy = Callable[[env.Episode], list]


@dataclass
class EpisodeResult:
    v2n_rates: np.ndarray        # (H, M) over the full latency budget
    clean_v2n_rates: np.ndarray  # (H, M) same channels, all platoons silent
    delivered: np.ndarray        # (N, V) bool
    rewards: list[float]
    steps_active: int


def run_episode(episode: env.Episode, policy: Policy, weights: RewardWeights | None = None) -> EpisodeResult:
    weights = weights or RewardWeights()
    cfg = episode.config
    rewards = []
    while not episode.done:
        out = env.step(episode, policy(episode))
        rewards.append(step_reward(out, weights, cfg))
    steps_active = episode.payload.steps_elapsed
    tail = episode.drain()
    rewards.extend(idle_rewards(tail, steps_active, weights, cfg))
    return EpisodeResult(
        v2n_rates=np.array(episode.v2n_history),
        clean_v2n_rates=np.array(episode.clean_v2n_history),
        delivered=env.delivery_success(episode.payload),
        rewards=rewards,
        steps_active=steps_active,
    )


def greedy_policy(agents: list[Agent], fingerprint_e: float) -> Policy:
    """Distributed execution: each active leader acts on its own observation."""
    def policy(episode: env.Episode):
        cfg = episode.config
        joint = [None] * cfg.n_platoons
        for n in np.flatnonzero(episode.payload.active):
            obs = build_observation(episode, n, fingerprint_e, 0.0)
            q = q_forward(agents[n].online, obs)
            joint[n] = decode_action(int(np.argmax(q)), cfg.n_v2n, len(cfg.power_levels_dbm))
        return joint
    return policy


def discounted_returns(rewards, gamma: float) -> np.ndarray:
    g = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        g[t] = acc
    return g


@dataclass
class TrainStats:
    episode: int
    epsilon: float
    reward: float
    delivery: float
    losses: list


def train_episode(agents: list[Agent], env_cfg: env.EnvConfig, cfg: TrainConfig, weights: RewardWeights,
                  rngs: dict, e: int, total: int) -> TrainStats:
    """One training episode followed by the per-agent minibatch updates.

    When a platoon finishes its payload it stops acting; its last transition is
    stored as terminal with the discounted sum of the shared rewards that follow
    (including the silent tail up to the latency budget), so finishing early is
    never mistaken for forfeiting the rest of the episode's reward.
    """
    episode = env.reset_episode(env_cfg, rngs["env"])
    eps = cfg.epsilon(e, total)
    e_norm = e / total
    n_pow = len(env_cfg.power_levels_dbm)

    steps = []
    rewards = []
    while not episode.done:
        taken = {}
        joint = [None] * env_cfg.n_platoons
        for n in np.flatnonzero(episode.payload.active):
            obs = build_observation(episode, n, e_norm, eps)
            a = agents[n].act(obs, eps, rngs["act"])
            taken[n] = (obs, a)
            joint[n] = decode_action(a, env_cfg.n_v2n, n_pow)
        out = env.step(episode, joint)
        rewards.append(step_reward(out, weights, env_cfg))
        steps.append((taken, out.payload.active.copy(), out.done))
    n_live = len(rewards)
    tail = episode.drain()
    rewards.extend(idle_rewards(tail, n_live, weights, env_cfg))

    scaled = np.asarray(rewards) * cfg.reward_scale
    returns = discounted_returns(scaled, cfg.gamma)
    for t, (taken, still_active, done) in enumerate(steps):
        for n, (obs, a) in taken.items():
            if not still_active[n]:
                exp = Experience(obs, a, float(returns[t]), obs, True)
            elif done:
                exp = Experience(obs, a, float(scaled[t]), obs, True)
            else:
                nxt = steps[t + 1][0][n][0]
                exp = Experience(obs, a, float(scaled[t]), nxt, False)
            agents[n].buffer.push(exp)

    losses = []
    for agent in agents:
        ls = [agent.learn(cfg, rngs["learn"]) for _ in range(cfg.updates_per_episode)]
        ls = [x for x in ls if x is not None]
        losses.append(float(np.mean(ls)) if ls else None)
    if (e + 1) % cfg.target_sync_period == 0:
        for agent in agents:
            agent.sync()

    delivered = float(np.mean(env.delivery_success(episode.payload)))
    return TrainStats(e, eps, float(np.sum(rewards)), delivered, losses)
