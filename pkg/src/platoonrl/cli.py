"""Command-line entry point: train, eval, sweep, baseline, selftest."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import harness
from .selftest import run_selftest

log = logging.getLogger("platoonrl")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="TOML experiment config")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--out", type=Path, help="output directory (overrides config)")
    p.add_argument("--allocator", choices=harness.ALLOCATORS)
    p.add_argument("--payload-bytes", type=int, dest="payload_bytes")
    p.add_argument("--m", type=int, help="number of V2N links / sub-bands")
    p.add_argument("--checkpoints", type=Path, help="checkpoint directory (default: --out)")
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    p.add_argument("-q", "--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="platoonrl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("train", "train one DDQN per platoon leader"),
        ("eval", "evaluate an allocator over the payload sweep"),
        ("sweep", "train RL agents and evaluate every allocator; writes CSV and figures"),
        ("baseline", "evaluate the exhaustive and random allocators only"),
        ("selftest", "run the invariant suite"),
    ):
        _common(sub.add_parser(name, help=help_))
    return parser


def _load(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    changes = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ValueError("--seed must be nonnegative")
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out_dir"] = str(args.out)
    if args.m is not None:
        changes["m_values"] = (args.m,)
        changes["env"] = dataclasses.replace(cfg.env, n_v2n=args.m)
    if changes:
        cfg = dataclasses.replace(cfg, **changes)
    return cfg


def _eval_payloads(cfg, args) -> harness.ExperimentConfig:
    if args.payload_bytes is not None:
        cfg = dataclasses.replace(cfg, payload_sweep_bytes=(args.payload_bytes,))
    return cfg


def _emit(records, path: Path, figures: bool):
    harness.write_csv(records, path)
    log.info("wrote %s", path)
    if figures:
        from .plotting import render_figures
        for p in render_figures(records, path.parent):
            log.info("wrote %s", p)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        cfg = _load(args)
        out = Path(cfg.out_dir)
        if args.command == "selftest":
            ok = run_selftest(sys.stdout)
            return 0 if ok else 1
        if args.command == "train":
            if args.payload_bytes is not None:
                cfg = cfg.with_payload(args.payload_bytes)
            for p in harness.run_training(cfg, out):
                log.info("wrote %s", p)
            return 0
        if args.command == "eval":
            cfg = _eval_payloads(cfg, args)
            alloc = args.allocator or "rl"
            out.mkdir(parents=True, exist_ok=True)
            ckpt = args.checkpoints or out
            records = harness.run_evaluation(cfg, ckpt if alloc == "rl" else None, (alloc,))
            _emit(records, out / f"eval_{alloc}.csv", not args.no_figures)
            return 0
        if args.command == "baseline":
            cfg = _eval_payloads(cfg, args)
            allocs = (args.allocator,) if args.allocator else ("exhaustive", "random")
            if "rl" in allocs:
                raise ValueError("baseline does not run the rl allocator; use eval or sweep")
            out.mkdir(parents=True, exist_ok=True)
            records = []
            for m in cfg.m_values:
                records.extend(harness.run_evaluation(cfg.with_m(m), None, allocs))
            _emit(records, out / "baseline.csv", not args.no_figures)
            return 0
        if args.command == "sweep":
            cfg = _eval_payloads(cfg, args)
            if args.allocator:
                cfg = dataclasses.replace(cfg, allocators=(args.allocator,))
            harness.run_sweep(cfg, out, checkpoint_root=args.checkpoints, figures=not args.no_figures)
            log.info("wrote %s", out / "sweep.csv")
            return 0
    except (FileNotFoundError, ValueError, OSError) as exc:
        print(f"platoonrl {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
