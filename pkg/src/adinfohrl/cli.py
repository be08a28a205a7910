"""Command-line front end: ``adinfohrl train | eval | report``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from .agent import TrainRecord, evaluate, run_training
from .checkpoint import load_checkpoint, save_checkpoint
from .config import MODES, load_config, save_config
from .envs import make_env
from .errors import CheckpointError, ConfigurationError, NumericalError

log = logging.getLogger("adinfohrl")

METRICS_FILE = "metrics.csv"
CONFIG_FILE = "config.json"
CHECKPOINT_FILE = "checkpoint.json"
DIAGNOSTIC_FILE = "diagnostic-checkpoint.json"


class ReportError(RuntimeError):
    pass


def metrics_header(option_count: int) -> list:
    return (["step", "eval_return_mean", "eval_return_std", "critic_loss_1", "critic_loss_2",
             "option_loss", "mi_estimate"]
            + [f"usage_{k}" for k in range(option_count)]
            + ["option_action_separation", "success_rate"])


def metrics_row(record: TrainRecord) -> list:
    values = [record.eval_return_mean, record.eval_return_std, record.critic_loss_1,
              record.critic_loss_2, record.option_loss, record.mi_estimate,
              *record.option_usage, record.option_action_separation, record.success_rate]
    return [str(record.step)] + [repr(float(v)) for v in values]


def run_dir_name(seed: int) -> str:
    return f"seed-{seed}"


def parse_seeds(text: str) -> list:
    try:
        seeds = [int(s) for s in text.replace(" ", "").split(",") if s]
    except ValueError:
        raise ConfigurationError(f"--seeds expects a comma-separated list of integers, got {text!r}")
    return seeds


def _ensure_writable(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write-test"
    probe.write_text("")
    probe.unlink()


def cmd_train(args) -> int:
    overrides = list(args.set or [])
    if args.mode:
        overrides.append(("mode", args.mode))
    if args.seeds:
        overrides.append(("seeds", parse_seeds(args.seeds)))
    if args.out:
        overrides.append(("output_dir", args.out))
    config = load_config(args.config, overrides)
    out = Path(config.output_dir)
    _ensure_writable(out)
    run_dirs = {seed: out / run_dir_name(seed) for seed in config.seeds}
    existing = [str(d) for d in run_dirs.values() if d.exists()]
    if existing and not args.overwrite:
        print(f"error: run directories already exist: {', '.join(existing)} "
              "(pass --overwrite to replace them)", file=sys.stderr)
        return 2
    save_config(config, out / CONFIG_FILE)

    status = 0
    for seed, run_dir in run_dirs.items():
        if run_dir.exists():
            shutil.rmtree(run_dir)
        run_dir.mkdir(parents=True)
        run_config = load_config(None, [(k, v) for k, v in config.to_dict().items()
                                        if k != "seeds"] + [("seeds", [seed])])
        save_config(run_config, run_dir / CONFIG_FILE)
        metrics_path = run_dir / METRICS_FILE
        with metrics_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(metrics_header(config.effective_option_count))

            def on_eval(agent, record, writer=writer, fh=fh, run_dir=run_dir):
                writer.writerow(metrics_row(record))
                fh.flush()
                save_checkpoint(agent, run_dir / CHECKPOINT_FILE)
                print(f"[{config.mode} seed {seed}] step {record.step}: "
                      f"return {record.eval_return_mean:.4f} +- {record.eval_return_std:.4f}",
                      flush=True)

            try:
                run_training(run_config, seed, callback=on_eval)
            except NumericalError as exc:
                agent = getattr(exc, "agent", None)
                if agent is not None:
                    save_checkpoint(agent, run_dir / DIAGNOSTIC_FILE)
                print(f"error: seed {seed} aborted: {exc}", file=sys.stderr)
                status = 1
    return status


def cmd_eval(args) -> int:
    agent = load_checkpoint(args.checkpoint)
    cfg = agent.config
    env = make_env(cfg.env_name, **cfg.env_params)
    stats = evaluate(agent, env, args.episodes, args.seed)
    usage = stats.option_counts / max(stats.option_counts.sum(), 1)
    print(f"episodes: {args.episodes}")
    print(f"return_mean: {stats.mean!r}")
    print(f"return_std: {stats.std!r}")
    print(f"success_rate: {stats.success_rate!r}")
    print("option_usage: " + " ".join(f"{k}:{u:.4f}" for k, u in enumerate(usage)))
    return 0


def read_run(run_dir: Path):
    """(mode, steps, returns) from one run directory."""
    cfg_path = run_dir / CONFIG_FILE
    metrics_path = run_dir / METRICS_FILE
    if not metrics_path.exists():
        raise ReportError(f"{run_dir}: no {METRICS_FILE}")
    mode = json.loads(cfg_path.read_text()).get("mode", "unknown") if cfg_path.exists() else "unknown"
    with metrics_path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ReportError(f"{run_dir}: {METRICS_FILE} has no evaluation rows")
    steps = [int(r["step"]) for r in rows]
    returns = [float(r["eval_return_mean"]) for r in rows]
    return mode, steps, returns


def aggregate(runs) -> list:
    """Cross-seed mean and (population) std of eval returns per mode and interval.

    ``runs`` is a list of ``(mode, steps, returns)``. Every run must share the
    same evaluation grid. Returns rows ``(mode, kind, step, n, mean, std)``
    where ``kind`` is ``curve`` for each interval and ``final`` for the last.
    """
    if not runs:
        raise ReportError("no runs to aggregate")
    grid = runs[0][1]
    for mode, steps, _ in runs:
        if steps != grid:
            raise ReportError(f"evaluation grids differ across runs ({grid} vs {steps})")
    by_mode = {}
    for mode, _, returns in runs:
        by_mode.setdefault(mode, []).append(returns)
    rows = []
    for mode in sorted(by_mode):
        table = np.asarray(by_mode[mode], dtype=np.float64)
        mean, std = table.mean(axis=0), table.std(axis=0)
        for k, step in enumerate(grid):
            rows.append((mode, "curve", step, len(table), float(mean[k]), float(std[k])))
        rows.append((mode, "final", grid[-1], len(table), float(mean[-1]), float(std[-1])))
    return rows


def cmd_report(args) -> int:
    dirs = []
    for d in args.runs:
        d = Path(d)
        if (d / METRICS_FILE).exists():
            dirs.append(d)
        else:
            dirs.extend(sorted(p.parent for p in d.glob(f"*/{METRICS_FILE}")))
    if not dirs:
        raise ReportError("no completed runs found")
    rows = aggregate([read_run(d) for d in dirs])
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(["mode", "kind", "step", "runs", "eval_return_mean", "eval_return_std"])
        for mode, kind, step, n, mean, std in rows:
            writer.writerow([mode, kind, step, n, repr(mean), repr(std)])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adinfohrl",
        description="Advantage-weighted information maximization for option learning.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one run per seed")
    train.add_argument("--config", metavar="PATH", help="flat JSON config file")
    train.add_argument("--set", metavar="KEY=VALUE", action="append",
                       help="override a config key (repeatable; VALUE parsed as JSON)")
    train.add_argument("--out", metavar="DIR", help="output directory (config key output_dir)")
    train.add_argument("--overwrite", action="store_true", help="replace existing run directories")
    train.add_argument("--seeds", metavar="LIST", help="comma-separated seeds, e.g. 0,1,2")
    train.add_argument("--mode", choices=MODES)
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint without exploration noise")
    ev.add_argument("checkpoint", metavar="PATH")
    ev.add_argument("--episodes", type=int, default=10)
    ev.add_argument("--seed", type=int, default=0)
    ev.set_defaults(func=cmd_eval)

    rep = sub.add_parser("report", help="aggregate eval returns across run directories")
    rep.add_argument("runs", nargs="+", metavar="DIR",
                     help="run directories, or parent directories containing them")
    rep.add_argument("--output", metavar="PATH", help="write the CSV here instead of stdout")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "episodes", 1) < 1:
        parser.error("--episodes must be >= 1")
    try:
        return args.func(args)
    except (ConfigurationError, CheckpointError, ReportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
