"""Command-line entry point: ``hears run | ablate | verify | plotdata``.

Configuration is layered: a preset (if given) supplies the defaults, a
JSON config file overrides them, and explicit flags override both.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from pathlib import Path

import numpy as np

from hears import __version__
from hears.harness.config import PRESETS, ExperimentConfig, ablation_grid, preset_config
from hears.harness.experiment import ExperimentFailure, run_experiment


def _seed_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS), help="shaping preset providing defaults")
    p.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    p.add_argument("--env", help="environment name (gridnav, pendulum, lander, hopper, vehicle)")
    p.add_argument("--learner", choices=("actor_critic", "tabular"))
    p.add_argument("--seed", type=_seed_list, help="seed or comma-separated seeds")
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--workers", type=int, default=1, help="worker processes (results merge in seed order)")


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    config = preset_config(args.preset) if args.preset else ExperimentConfig()
    if args.config:
        values = json.loads(Path(args.config).read_text())
        merged = {**config.to_dict(), **values}
        config = ExperimentConfig.from_dict(merged)
    overrides = {"env": args.env, "learner": args.learner, "seeds": args.seed, "episodes": args.episodes,
                 "output_dir": str(args.out) if args.out else None}
    return config.with_overrides(**overrides)


def _print_summary(summary: dict) -> None:
    print(f"config {summary['config_hash']} (version {summary['version']})")
    for seed, entry in summary["per_seed"].items():
        if entry.get("failed"):
            print(f"  seed {seed}: FAILED {entry.get('error')}")
            continue
        extra = ""
        if "episodes_to_target" in entry:
            extra = f" episodes_to_target={entry['episodes_to_target']}"
        elif "eval_return_mean" in entry:
            extra = f" eval_return={entry['eval_return_mean']:.4g} tv/step={entry['eval_action_tv_per_step']:.4g}"
        print(f"  seed {seed}: final={entry['final_stable_mean']:.4g} cv={entry['cv_percent']}{extra}")


def cmd_run(args: argparse.Namespace) -> int:
    config = build_config(args)
    out = Path(config.output_dir)
    try:
        result = run_experiment(config, out, workers=args.workers)
    except ExperimentFailure as exc:
        _print_summary(exc.result.summary)
        print(f"experiment aborted: {exc}; partial results in {out}", file=sys.stderr)
        return 1
    _print_summary(result.summary)
    print(f"wrote {out}")
    return 0


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")


def cmd_ablate(args: argparse.Namespace) -> int:
    base = build_config(args)
    variants = ablation_grid(base)
    out = Path(base.output_dir)
    index = []
    status = 0
    for cfg in variants:
        at, ae, lam = cfg.coefficients
        print(f"{cfg.variant}: alpha_task={at:g} alpha_energy={ae:g} lambda={lam:g}")
        entry = {"variant": cfg.variant, "alpha_task": at, "alpha_energy": ae, "lambda": lam,
                 "config_hash": cfg.config_hash()}
        if not args.dry_run:
            sub = out / _slug(cfg.variant)
            cfg = cfg.with_overrides(output_dir=str(sub))
            entry["config_hash"] = cfg.config_hash()
            try:
                result = run_experiment(cfg, sub, workers=args.workers)
                entry["final_mean"] = result.summary["final_mean"]
            except ExperimentFailure as exc:
                entry["failed"] = str(exc)
                status = 1
            entry["path"] = sub.name
        index.append(entry)
    if not args.dry_run or args.out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.json").write_text(json.dumps({"version": __version__, "variants": index},
                                                      indent=2, sort_keys=True) + "\n")
    return status


def cmd_verify(args: argparse.Namespace) -> int:
    from hears.harness.verify import run_all

    results = run_all(args.scale)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def cmd_plotdata(args: argparse.Namespace) -> int:
    """Per-episode learning curves aggregated over seeds, for plotting."""
    run_dir = Path(args.run)
    rows = list(csv.DictReader(open(run_dir / "episodes.csv", newline="")))
    if not rows:
        print(f"{run_dir / 'episodes.csv'} has no rows", file=sys.stderr)
        return 1
    by_episode: dict[int, list[float]] = {}
    for row in rows:
        by_episode.setdefault(int(row["episode"]), []).append(float(row["return"]))
    out = Path(args.out) if args.out else run_dir / "curves.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["config_hash", "version", "episode", "n_seeds", "mean", "std", "median", "min", "max"])
        for ep in sorted(by_episode):
            v = np.asarray(by_episode[ep])
            w.writerow([rows[0]["config_hash"], rows[0]["version"], ep, v.size, repr(float(v.mean())),
                        repr(float(v.std())), repr(float(np.median(v))), repr(float(v.min())), repr(float(v.max()))])
    print(f"wrote {out}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hears", description="Energy-aware reward shaping experiments")
    parser.add_argument("--version", action="version", version=f"hears {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one configuration over its seeds")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="run the eight-variant component ablation")
    _add_config_flags(p)
    p.add_argument("--dry-run", action="store_true", help="list the variants without training")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("verify", help="run the theorem checks; exit status 1 on any failure")
    p.add_argument("--scale", choices=("quick", "full"), default="quick")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plotdata", help="aggregate a run directory into plot-ready CSV")
    p.add_argument("--run", required=True, help="run directory containing episodes.csv")
    p.add_argument("--out", help="output CSV (default: <run>/curves.csv)")
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
