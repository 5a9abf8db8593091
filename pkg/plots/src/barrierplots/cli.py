"""Command line: render phase portraits and time histories from CSV logs."""

import argparse

from .render import PlotSpec, render_phase, render_timeseries


def build_parser():
    parser = argparse.ArgumentParser(
        prog="barrierplot",
        description="Plot softbarrier trajectory CSVs and barrier level sets",
    )
    sub = parser.add_subparsers(dest="kind", required=True)

    p_phase = sub.add_parser("phase", help="level-set contours with trajectories")
    p_phase.add_argument("--in", dest="inputs", nargs="*", default=[], help="trajectory CSVs")
    p_phase.add_argument("--grid", required=True, help="level-set grid CSV")
    p_phase.add_argument("--out", required=True, help="output image (png/svg/...)")

    p_ts = sub.add_parser("timeseries", help="barrier and gating time histories")
    p_ts.add_argument("--in", dest="inputs", nargs="+", required=True, help="trajectory CSV")
    p_ts.add_argument("--out", required=True, help="output image (png/svg/...)")
    p_ts.add_argument("--epsilon", type=float, default=None, help="gate threshold reference")
    p_ts.add_argument("--kappa", type=float, default=None, help="ramp width reference")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.kind == "phase":
        spec = PlotSpec(kind="phase", inputs=args.inputs, grid=args.grid, out=args.out)
        result = render_phase(spec)
        print(
            f"wrote {args.out}: {result.n_trajectories} trajectories, "
            f"{result.n_contours} level-set contours"
        )
    else:
        spec = PlotSpec(
            kind="timeseries",
            inputs=args.inputs,
            out=args.out,
            epsilon=args.epsilon,
            kappa=args.kappa,
        )
        render_timeseries(spec)
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
