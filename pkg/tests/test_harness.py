import dataclasses
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platoonrl import cli, harness
from platoonrl import environment as env
from platoonrl.harness import ExperimentConfig, MetricsRecord
from platoonrl.training import EpisodeResult

ROOT = Path(__file__).resolve().parents[1]


def tiny(**kw):
    base = dict(train_episodes=3, test_episodes=2, payload_sweep_bytes=(2 * 1060,), m_values=(1,),
                train=dataclasses.replace(harness.TrainConfig(), batch_size=4, buffer_capacity=500))
    base.update(kw)
    return ExperimentConfig(**base)


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.train_episodes == 2000 and cfg.test_episodes == 100
    assert cfg.payload_sweep_bytes == tuple(k * 1060 for k in range(2, 13, 2))
    assert cfg.env.payload_bytes == 8 * 1060
    assert cfg.env.power_levels_dbm == (23.0, 10.0, 5.0, -100.0)
    assert cfg.env.latency_ms == 10.0 and cfg.env.bandwidth_hz == 1e6


def test_config_round_trip(tmp_path):
    cfg = tiny(seed=7, out_dir="x/y")
    path = tmp_path / "c.toml"
    path.write_text(harness.dump_config(cfg))
    assert harness.load_config(path) == cfg


def test_shipped_config_matches_defaults():
    assert harness.load_config(ROOT / "configs" / "default.toml") == ExperimentConfig()


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[env]\nno_such_key = 1\n")
    with pytest.raises(ValueError, match="no_such_key"):
        harness.load_config(bad)
    bad.write_text("[env\n")
    with pytest.raises(ValueError, match="malformed"):
        harness.load_config(bad)
    with pytest.raises(ValueError):
        ExperimentConfig(allocators=("greedy",))


def test_derive_rng_independent_streams():
    a = harness.derive_rng(0, 2, 5).random()
    assert a == harness.derive_rng(0, 2, 5).random()
    assert a != harness.derive_rng(0, 2, 6).random()
    assert a != harness.derive_rng(1, 2, 5).random()


def _result(v2n, delivered):
    v2n = np.asarray(v2n, float)
    return EpisodeResult(v2n, v2n, np.asarray(delivered, bool), [], 10)


def test_compute_metrics_examples():
    rec = harness.compute_metrics([_result(np.ones((10, 2)), np.ones((4, 3)))], 2120, 2, "random", 0)
    assert rec.delivery_probability == 1.0
    d = np.zeros((4, 3), bool)
    d.flat[:3] = True
    assert harness.compute_metrics([_result(np.ones((10, 1)), d)], 2120, 1, "rl", 0).delivery_probability == 0.25
    rec = harness.compute_metrics([_result(np.full((10, 2), 3.5e6), d)] * 3, 2120, 2, "rl", 0)
    assert rec.avg_v2n_rate_bps == 3.5e6 and rec.episodes == 3
    with pytest.raises(ValueError):
        harness.compute_metrics([], 2120, 1, "rl", 0)


records = st.builds(
    MetricsRecord,
    payload_bytes=st.integers(0, 10**7), M=st.integers(1, 4), allocator=st.sampled_from(harness.ALLOCATORS),
    avg_v2n_rate_bps=st.floats(0, 1e9, allow_nan=False), delivery_probability=st.floats(0, 1),
    episodes=st.integers(0, 10**4), seed=st.integers(0, 2**63),
)


@settings(max_examples=50)
@given(st.lists(records, max_size=5))
def test_csv_round_trip(recs):
    text = harness.format_csv(recs)
    assert text.splitlines()[0] == "payload_bytes,M,allocator,avg_v2n_rate_bps,delivery_probability,episodes,seed"
    assert harness.parse_csv(text) == recs


def test_empty_sweep_gives_no_records():
    assert harness.run_evaluation(tiny(payload_sweep_bytes=()), None, ("random",)) == []


def test_random_evaluation_reproducible():
    cfg = tiny(test_episodes=3, payload_sweep_bytes=(2120, 6360))
    assert harness.run_evaluation(cfg, None, ("random",)) == harness.run_evaluation(cfg, None, ("random",))


def test_random_never_beats_exhaustive_delivery():
    cfg = tiny(test_episodes=10, payload_sweep_bytes=(2120, 6360, 12720))
    recs = harness.run_evaluation(cfg.with_m(1), None, ("exhaustive", "random"))
    by = {(r.payload_bytes, r.allocator): r for r in recs}
    for b in cfg.payload_sweep_bytes:
        assert by[b, "random"].delivery_probability <= by[b, "exhaustive"].delivery_probability
        assert 0 <= by[b, "random"].delivery_probability <= 1


def test_training_smoke_and_determinism(tmp_path):
    cfg = tiny()
    paths = harness.run_training(cfg, tmp_path / "a")
    assert [p.name for p in paths] == [f"agent_{n}.ckpt" for n in range(4)]
    log = (tmp_path / "a" / "train_log.jsonl").read_text().splitlines()
    assert len(log) == 3
    agents = harness.load_agents(tmp_path / "a", cfg)
    assert len(agents) == 4
    harness.run_training(cfg, tmp_path / "b")
    for p in paths:
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()
    recs = harness.run_evaluation(cfg, tmp_path / "a", ("rl",))
    assert len(recs) == 1 and recs[0].allocator == "rl"


def test_load_agents_errors(tmp_path):
    cfg = tiny()
    with pytest.raises(FileNotFoundError, match="agent_0.ckpt"):
        harness.load_agents(tmp_path, cfg)
    harness.run_training(cfg, tmp_path)
    with pytest.raises(ValueError, match="sizes"):
        harness.load_agents(tmp_path, cfg.with_m(1))


def test_rl_without_trained_agents():
    with pytest.raises(FileNotFoundError):
        harness.run_evaluation(tiny(), None, ("rl",))


def test_sweep_writes_csv_and_figures(tmp_path):
    cfg = tiny(payload_sweep_bytes=(2120, 4240))
    recs = harness.run_sweep(cfg, tmp_path)
    assert len(recs) == 2 * 3
    assert harness.read_csv(tmp_path / "sweep.csv") == recs
    for name in ("fig_v2n_rate.png", "fig_delivery.png"):
        assert (tmp_path / name).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


# ---------------------------------------------------------------- CLI

def _write_cfg(tmp_path, cfg):
    p = tmp_path / "cfg.toml"
    p.write_text(harness.dump_config(cfg))
    return p


def test_cli_sweep_one_row_per_point(tmp_path, capsys):
    cfg_path = _write_cfg(tmp_path, tiny(payload_sweep_bytes=(2120, 4240)))
    out = tmp_path / "out"
    assert cli.main(["sweep", "--config", str(cfg_path), "--seed", "1", "--out", str(out), "-q"]) == 0
    recs = harness.read_csv(out / "sweep.csv")
    assert {(r.payload_bytes, r.allocator) for r in recs} == {(b, a) for b in (2120, 4240) for a in harness.ALLOCATORS}
    assert all(r.seed == 1 for r in recs)


def test_cli_eval_without_checkpoints(tmp_path, capsys):
    cfg_path = _write_cfg(tmp_path, tiny())
    code = cli.main(["eval", "--config", str(cfg_path), "--out", str(tmp_path / "o"), "--allocator", "rl"])
    assert code != 0
    assert str(tmp_path / "o" / "agent_0.ckpt") in capsys.readouterr().err


def test_cli_train_then_eval(tmp_path):
    cfg_path = _write_cfg(tmp_path, tiny())
    out = tmp_path / "run"
    assert cli.main(["train", "--config", str(cfg_path), "--out", str(out), "-q"]) == 0
    assert cli.main(["eval", "--config", str(cfg_path), "--out", str(out), "--no-figures", "-q"]) == 0
    assert len(harness.read_csv(out / "eval_rl.csv")) == 1


def test_cli_baseline(tmp_path):
    cfg_path = _write_cfg(tmp_path, tiny())
    out = tmp_path / "b"
    assert cli.main(["baseline", "--config", str(cfg_path), "--out", str(out), "--payload-bytes", "4240",
                     "--no-figures", "-q"]) == 0
    recs = harness.read_csv(out / "baseline.csv")
    assert {(r.payload_bytes, r.allocator) for r in recs} == {(4240, "exhaustive"), (4240, "random")}


def test_cli_selftest(capsys):
    assert cli.main(["selftest"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 5 and all(line.startswith("PASS") for line in lines)


def test_cli_bad_input(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["sweep", "--bogus"])
    assert exc.value.code != 0
    bad = tmp_path / "bad.toml"
    bad.write_text("[experiment\n")
    assert cli.main(["baseline", "--config", str(bad)]) == 2
    assert "malformed" in capsys.readouterr().err
    assert cli.main(["baseline", "--config", str(tmp_path / "missing.toml")]) == 2
