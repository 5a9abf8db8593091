"""Command-line entry points: simulate, sweep, check-invariance, estimate-lipschitz."""

import argparse
import sys
from pathlib import Path

from .experiments import (
    FLOAT_FMT,
    load_config,
    run_experiment,
    run_invariance_check,
    run_lipschitz_estimate,
)


def _add_common(parser):
    parser.add_argument("--config", required=True, help="experiment config (YAML)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="softbarrier",
        description="Safety-filtered closed-loop simulation with a soft-minimum barrier",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a single configured simulation")
    _add_common(p_sim)
    p_sim.add_argument("--run", type=int, default=0, help="run index within the config")
    p_sim.add_argument("--grid", action="store_true", help="also write the level-set grid CSV")

    p_sweep = sub.add_parser("sweep", help="run every configured simulation")
    _add_common(p_sweep)
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_sweep.add_argument("--grid", action="store_true", help="also write the level-set grid CSV")

    p_inv = sub.add_parser(
        "check-invariance", help="sampled forward-invariance check of the backup set"
    )
    _add_common(p_inv)

    p_lip = sub.add_parser(
        "estimate-lipschitz", help="sampled Lipschitz/speed bounds and margin"
    )
    _add_common(p_lip)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config)
    out_dir = Path(args.out)

    if args.command == "simulate":
        result = run_experiment(
            cfg,
            out_dir=out_dir,
            seed=args.seed,
            run_indices=[args.run],
            quiet=args.quiet,
            write_grid=args.grid,
        )
        return 0

    if args.command == "sweep":
        result = run_experiment(
            cfg,
            out_dir=out_dir,
            seed=args.seed,
            jobs=args.jobs,
            quiet=args.quiet,
            write_grid=args.grid,
        )
        diverged = [rr.index for rr in result.runs if "diverged_at" in rr.metrics]
        if diverged and not args.quiet:
            print(f"runs diverged: {diverged}", file=sys.stderr)
        return 0

    if args.command == "check-invariance":
        report = run_invariance_check(cfg, seed=args.seed)
        out_dir.mkdir(parents=True, exist_ok=True)
        verdict = "PASS" if report.passed else "FAIL"
        lines = [
            f"result = {verdict}",
            f"min_margin = {FLOAT_FMT % report.min_margin}",
            f"samples = {report.samples}",
            f"horizon = {FLOAT_FMT % report.horizon}",
        ]
        (out_dir / "invariance.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        if not args.quiet:
            print("\n".join(lines))
        return 0 if report.passed else 2

    if args.command == "estimate-lipschitz":
        report = run_lipschitz_estimate(cfg, seed=args.seed)
        out_dir.mkdir(parents=True, exist_ok=True)
        lines = [f"{key} = {FLOAT_FMT % value}" for key, value in report.items()]
        (out_dir / "lipschitz.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        if not args.quiet:
            print("\n".join(lines))
        return 0

    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    raise SystemExit(main())
