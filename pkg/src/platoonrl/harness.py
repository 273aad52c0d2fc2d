"""Experiment orchestration: configuration, training, evaluation and result files."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines
from . import environment as env
from .ddqn import Agent, TrainConfig
from .mdp import RewardWeights, observation_dim
from .training import EpisodeResult, greedy_policy, run_episode, train_episode

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

ALLOCATORS = ("rl", "exhaustive", "random")
CSV_FIELDS = ("payload_bytes", "M", "allocator", "avg_v2n_rate_bps", "delivery_probability", "episodes", "seed")

# stream tags for deterministic seed derivation
_TRAIN, _EVAL, _RANDOM_POLICY = 1, 2, 3


@dataclass
class ExperimentConfig:
    env: env.EnvConfig = field(default_factory=env.EnvConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    reward: RewardWeights = field(default_factory=RewardWeights)
    train_episodes: int = 2000
    test_episodes: int = 100
    payload_sweep_bytes: tuple[int, ...] = tuple(k * 1060 for k in (2, 4, 6, 8, 10, 12))
    m_values: tuple[int, ...] = (1, 2)
    allocators: tuple[str, ...] = ALLOCATORS
    seed: int = 0
    out_dir: str = "runs/default"

    def __post_init__(self):
        self.payload_sweep_bytes = tuple(int(b) for b in self.payload_sweep_bytes)
        self.m_values = tuple(int(m) for m in self.m_values)
        self.allocators = tuple(self.allocators)
        bad = [a for a in self.allocators if a not in ALLOCATORS]
        if bad:
            raise ValueError(f"unknown allocator(s) {bad}; choose from {ALLOCATORS}")
        if self.train_episodes < 1 or self.test_episodes < 0:
            raise ValueError("train_episodes must be >= 1 and test_episodes >= 0")

    def with_m(self, m: int) -> "ExperimentConfig":
        return dataclasses.replace(self, env=dataclasses.replace(self.env, n_v2n=m))

    def with_payload(self, payload_bytes: int) -> "ExperimentConfig":
        return dataclasses.replace(self, env=dataclasses.replace(self.env, payload_bytes=payload_bytes))


_SECTIONS = {"env": env.EnvConfig, "train": TrainConfig, "reward": RewardWeights}


def _coerce(cls, values: dict, where: str) -> dict:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown key(s) in [{where}]: {sorted(unknown)}")
    return {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = data.pop(name, {})
        if not isinstance(section, dict):
            raise ValueError(f"[{name}] must be a table")
        kwargs[name] = cls(**_coerce(cls, section, name))
    top = data.pop("experiment", {})
    top.update(data)
    kwargs.update(_coerce(ExperimentConfig, top, "experiment"))
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ValueError(f"{path}: malformed config: {exc}") from exc
    try:
        return config_from_dict(data)
    except TypeError as exc:
        raise ValueError(f"{path}: {exc}") from exc


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: ExperimentConfig) -> str:
    """Render a config as TOML; optional entries that are None are omitted."""
    lines = ["[experiment]"]
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in _SECTIONS:
            continue
        lines.append(f"{f.name} = {_toml_value(getattr(cfg, f.name))}")
    for name in _SECTIONS:
        lines.append(f"\n[{name}]")
        section = getattr(cfg, name)
        for f in dataclasses.fields(section):
            v = getattr(section, f.name)
            if v is not None:
                lines.append(f"{f.name} = {_toml_value(v)}")
    return "\n".join(lines) + "\n"


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


# ---------------------------------------------------------------- training

def checkpoint_paths(ckpt_dir, n_platoons: int) -> list[Path]:
    return [Path(ckpt_dir) / f"agent_{n}.ckpt" for n in range(n_platoons)]


def config_fingerprint(cfg: ExperimentConfig) -> dict:
    return {"n_v2n": cfg.env.n_v2n, "n_platoons": cfg.env.n_platoons,
            "members_per_platoon": cfg.env.members_per_platoon,
            "power_levels_dbm": list(cfg.env.power_levels_dbm),
            "train_episodes": cfg.train_episodes, "seed": cfg.seed}


def init_agents(cfg: ExperimentConfig) -> list[Agent]:
    rng = derive_rng(cfg.seed, _TRAIN, cfg.env.n_v2n, 1)
    dim = observation_dim(cfg.env)
    return [Agent.create(dim, cfg.env.n_actions, cfg.train, rng) for _ in range(cfg.env.n_platoons)]


def train_agents(cfg: ExperimentConfig, log_path=None, progress_every: int = 100) -> list[Agent]:
    """Centralized training of one DDQN per platoon leader at the configured payload."""
    agents = init_agents(cfg)
    key = (cfg.seed, _TRAIN, cfg.env.n_v2n)
    rngs = {"env": derive_rng(*key, 0), "act": derive_rng(*key, 2), "learn": derive_rng(*key, 3)}
    logf = open(log_path, "w") if log_path else None
    try:
        for e in range(cfg.train_episodes):
            stats = train_episode(agents, cfg.env, cfg.train, cfg.reward, rngs, e, cfg.train_episodes)
            if logf:
                logf.write(json.dumps(dataclasses.asdict(stats)) + "\n")
            if progress_every and (e + 1) % progress_every == 0:
                log.info("M=%d episode %d/%d eps=%.3f reward=%.1f delivery=%.2f", cfg.env.n_v2n, e + 1,
                         cfg.train_episodes, stats.epsilon, stats.reward, stats.delivery)
    finally:
        if logf:
            logf.close()
    return agents


def run_training(cfg: ExperimentConfig, out_dir=None) -> list[Path]:
    """Train and write `<out>/agent_<n>.ckpt` plus `<out>/train_log.jsonl`."""
    out = Path(out_dir or cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    agents = train_agents(cfg, out / "train_log.jsonl")
    paths = checkpoint_paths(out, cfg.env.n_platoons)
    fp = config_fingerprint(cfg)
    for agent, p in zip(agents, paths):
        agent.save(p, fp)
    return paths


def load_agents(ckpt_dir, cfg: ExperimentConfig) -> list[Agent]:
    paths = checkpoint_paths(ckpt_dir, cfg.env.n_platoons)
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise FileNotFoundError(f"missing checkpoint(s): {', '.join(missing)}")
    agents = [Agent.load(p) for p in paths]
    expect = [observation_dim(cfg.env), *cfg.train.hidden, cfg.env.n_actions]
    for p, a in zip(paths, agents):
        if a.online.sizes != expect:
            raise ValueError(f"{p}: network sizes {a.online.sizes} do not match config {expect}")
    return agents


# -------------------------------------------------------------- evaluation

@dataclass
class MetricsRecord:
    payload_bytes: int
    M: int
    allocator: str
    avg_v2n_rate_bps: float
    delivery_probability: float
    episodes: int
    seed: int


def compute_metrics(results: list[EpisodeResult], payload_bytes: int, m: int, allocator: str,
                    seed: int) -> MetricsRecord:
    if not results:
        raise ValueError("no episodes to summarize")
    v2n = np.concatenate([r.v2n_rates.ravel() for r in results])
    delivered = np.concatenate([r.delivered.ravel() for r in results])
    return MetricsRecord(int(payload_bytes), int(m), allocator, float(np.mean(v2n)),
                         float(np.mean(delivered)), len(results), int(seed))


def _policy_factory(allocator: str, cfg: ExperimentConfig, agents):
    if allocator == "rl":
        if agents is None:
            raise ValueError("allocator 'rl' needs trained agents")
        e_final = (cfg.train_episodes - 1) / cfg.train_episodes
        return lambda: greedy_policy(agents, e_final)
    if allocator == "exhaustive":
        return lambda: (lambda ep: baselines.exhaustive_step(ep, cfg.reward))
    if allocator == "random":
        def make():
            rng = derive_rng(cfg.seed, _RANDOM_POLICY, cfg.env.n_v2n, cfg.env.payload_bytes)
            return lambda ep: baselines.random_step(ep, rng)
        return make
    raise ValueError(f"unknown allocator {allocator!r}")


def evaluate(cfg: ExperimentConfig, allocator: str, agents=None) -> tuple[MetricsRecord, list[EpisodeResult]]:
    """Test episodes at cfg.env's payload; episode k uses the same channel seed for every allocator."""
    make_policy = _policy_factory(allocator, cfg, agents)
    policy = make_policy()
    results = []
    for k in range(cfg.test_episodes):
        episode = env.reset_episode(cfg.env, derive_rng(cfg.seed, _EVAL, k))
        res = run_episode(episode, policy, cfg.reward)
        bound = res.clean_v2n_rates.mean()
        if res.v2n_rates.mean() > bound * (1 + 1e-12):
            raise AssertionError(f"episode {k}: V2N rate exceeds the interference-free bound")
        results.append(res)
    return compute_metrics(results, cfg.env.payload_bytes, cfg.env.n_v2n, allocator, cfg.seed), results


def run_evaluation(cfg: ExperimentConfig, checkpoints=None, allocators=None) -> list[MetricsRecord]:
    """One record per (payload, allocator) across the payload sweep, for cfg.env.n_v2n."""
    allocators = tuple(allocators or cfg.allocators)
    agents = None
    if "rl" in allocators:
        if checkpoints is None:
            raise FileNotFoundError("allocator 'rl' requires a checkpoint directory")
        agents = load_agents(checkpoints, cfg)
    records = []
    for payload in cfg.payload_sweep_bytes:
        point = cfg.with_payload(payload)
        for alloc in allocators:
            rec, _ = evaluate(point, alloc, agents)
            log.info("M=%d B=%d %s: v2n=%.3f Mbps delivery=%.3f", rec.M, payload, alloc,
                     rec.avg_v2n_rate_bps / 1e6, rec.delivery_probability)
            records.append(rec)
    return records


def run_sweep(cfg: ExperimentConfig, out_dir=None, m_values=None, checkpoint_root=None,
              figures: bool = True) -> list[MetricsRecord]:
    """Train (if rl is requested and no checkpoints are given), evaluate, write CSV and figures."""
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for m in (m_values or cfg.m_values):
        mcfg = cfg.with_m(m)
        ckpt = None
        if "rl" in cfg.allocators:
            if checkpoint_root is not None:
                ckpt = Path(checkpoint_root) / f"m{m}"
            else:
                ckpt = out / f"m{m}"
                run_training(mcfg, ckpt)
        records.extend(run_evaluation(mcfg, ckpt))
    write_csv(records, out / "sweep.csv")
    if figures:
        from .plotting import render_figures
        render_figures(records, out)
    return records


# ------------------------------------------------------------------- files

def format_csv(records: list[MetricsRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in records:
        w.writerow([r.payload_bytes, r.M, r.allocator, repr(r.avg_v2n_rate_bps), repr(r.delivery_probability),
                    r.episodes, r.seed])
    return buf.getvalue()


def parse_csv(text: str) -> list[MetricsRecord]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [MetricsRecord(int(r["payload_bytes"]), int(r["M"]), r["allocator"], float(r["avg_v2n_rate_bps"]),
                          float(r["delivery_probability"]), int(r["episodes"]), int(r["seed"])) for r in rows]


def write_csv(records: list[MetricsRecord], path):
    Path(path).write_text(format_csv(records))


def read_csv(path) -> list[MetricsRecord]:
    return parse_csv(Path(path).read_text())
