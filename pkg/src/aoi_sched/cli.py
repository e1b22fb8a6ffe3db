"""Command-line entry point: gen-traces, train, eval, compare.

Exit codes: 0 success, 2 configuration/usage error, 3 runtime error
(I/O, divergence). Set AOI_SCHED_LOG=DEBUG|INFO|... for verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluate as ev
from . import nn, traces, train
from .config import ConfigError, RunConfig, load_config
from .env import TrajectoryLog  # noqa: F401  (re-export for log consumers)
from .nn import FeatureScale
from .schedulers import EdfScheduler, OsrpScheduler, PolicyScheduler
from .traces import TraceError

log = logging.getLogger("aoi_sched")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _setup_logging() -> None:
    level = os.environ.get("AOI_SCHED_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _load_run(args) -> tuple[RunConfig, Path, Path]:
    cfg = load_config(args.config)
    base = Path(args.config).resolve().parent
    trace_dir = Path(args.traces) if args.traces else _resolve(base, cfg.paths.trace_dir)
    out_dir = Path(args.out) if args.out else _resolve(base, cfg.paths.out_dir)
    if args.seed is not None:
        cfg = RunConfig(seed=args.seed, env=cfg.env,
                        train=_replace_seed(cfg.train, args.seed),
                        eval=cfg.eval, paths=cfg.paths)
    return cfg, trace_dir, out_dir


def _replace_seed(train_cfg: train.TrainConfig, seed: int) -> train.TrainConfig:
    from dataclasses import replace
    return replace(train_cfg, seed=seed)


def _load_traces(trace_dir: Path) -> list[traces.Trace]:
    if not trace_dir.is_dir():
        raise TraceError(f"trace directory not found: {trace_dir}")
    return traces.load_trace_dir(trace_dir)


def cmd_gen_traces(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        params = json.loads(args.params)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--params is not valid JSON: {exc}")
    if not isinstance(params, dict):
        raise ConfigError("--params must be a JSON object")
    for i in range(args.count):
        trace = traces.gen_synthetic(args.kind, params, duration=args.duration,
                                     step=args.step, seed=args.seed + i)
        path = out_dir / f"{trace.trace_id}.csv"
        traces.save_trace(trace, path)
        log.info("wrote %s (%d samples)", path, trace.times.size)
    print(f"wrote {args.count} trace(s) to {out_dir}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg, trace_dir, out_dir = _load_run(args)
    trace_set = _load_traces(trace_dir)
    train_cfg = cfg.train
    if args.workers is not None:
        from dataclasses import replace
        train_cfg = replace(train_cfg, workers=args.workers)
    result = train.train(cfg.env, trace_set, train_cfg, out_dir=out_dir,
                         extra_meta={"config_hash": cfg.shape_hash()})
    final = result.checkpoints[-1] if result.checkpoints else None
    print(f"training done: {len(result.history)} episodes, "
          f"final checkpoint {final}")
    return EXIT_OK


def _make_scheduler(cfg: RunConfig, args):
    thresholds = cfg.env.thresholds
    if args.scheduler == "edf":
        return EdfScheduler(thresholds)
    if args.scheduler == "osrp":
        return OsrpScheduler(thresholds)
    if args.scheduler == "rl":
        if not args.policy:
            raise ConfigError("--scheduler rl requires --policy CKPT")
        actor, _critic, meta = nn.load_checkpoint(args.policy)
        want, got = cfg.shape_hash(), meta.get("config_hash")
        if got != want:
            raise ConfigError(f"checkpoint config_hash {got!r} does not match "
                              f"current config hash {want!r}")
        if actor.shape.n_sensors != cfg.env.n_sensors:
            raise ConfigError(f"checkpoint built for N={actor.shape.n_sensors}, "
                              f"config has N={cfg.env.n_sensors}")
        scale = FeatureScale(age_scale=meta["age_scale"], rate_scale=meta["rate_scale"])
        mode = args.mode or cfg.eval.mode
        return PolicyScheduler(actor, scale, mode=mode)
    raise ConfigError(f"unknown scheduler {args.scheduler!r}")


def cmd_eval(args) -> int:
    cfg, trace_dir, out_dir = _load_run(args)
    scheduler = _make_scheduler(cfg, args)
    trace_set = _load_traces(trace_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = ev.evaluate(scheduler, cfg.env, trace_set, jobs=cfg.eval.jobs,
                          seed=cfg.seed, burn_in=cfg.eval.burn_in,
                          episode_len=cfg.eval.episode_len)
    ev.write_metrics_csv(out_dir / f"metrics_{scheduler.name}.csv", metrics)
    ev.write_cdf_csv(out_dir / f"cdf_{scheduler.name}.csv", metrics)
    print(f"{scheduler.name}: objective {metrics.objective:.4f} "
          f"(aoi {metrics.aoi_term:.4f} + penalty {metrics.penalty_term:.4f}) "
          f"over {metrics.jobs} jobs")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    weights = cfg.env.weights
    entries = [ev.read_metrics_csv(path, weights) for path in args.inputs]
    report = ev.compare(entries, reference=args.reference)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ev.write_summary_csv(out_dir / "summary.csv", report)
    ev.write_comparison_csv(out_dir / "comparison.csv", report)
    for name in report.names:
        print(f"{name}: objective {report.objective[name]:.4f} "
              f"normalized {report.normalized_objective[name]:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aoi-sched",
        description="Age-of-Information scheduling: simulate, train, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-traces", help="generate synthetic throughput traces")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--kind", default="two-level-markov",
                   choices=sorted(traces.GENERATORS))
    p.add_argument("--params", default='{"low": 50.0, "high": 200.0, "p_switch": 0.05}',
                   help="JSON object of generator parameters")
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--duration", type=float, default=600000.0, help="ms")
    p.add_argument("--step", type=float, default=500.0, help="ms")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_traces)

    p = sub.add_parser("train", help="train the scheduling policy")
    p.add_argument("--config", required=True)
    p.add_argument("--traces", help="trace directory (overrides config paths)")
    p.add_argument("--out", help="output directory (overrides config paths)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a scheduler")
    p.add_argument("--config", required=True)
    p.add_argument("--scheduler", required=True, choices=["edf", "osrp", "rl"])
    p.add_argument("--mode", choices=["greedy", "sample"],
                   help="action selection for the rl scheduler")
    p.add_argument("--policy", help="checkpoint JSON for the rl scheduler")
    p.add_argument("--traces", help="trace directory (overrides config paths)")
    p.add_argument("--out", help="output directory (overrides config paths)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="compare metrics files against a reference")
    p.add_argument("--config", required=True)
    p.add_argument("--inputs", nargs="+", required=True, help="metrics CSV files")
    p.add_argument("--reference", default="rl")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TraceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (train.TrainingDiverged, OSError, ValueError, FloatingPointError,
            KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
