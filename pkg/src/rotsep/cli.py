"""Command-line entry point.

Subcommands: verify, simulate, hydro-compare, current-compare, einstein,
hodge. Exit codes: 0 all checks passed, 1 a check failed, 2 usage error.
Every run writes manifest.json, report.txt, summary.json and the owning
subcommand's data tables into --out.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import ExperimentSpec, run_experiment


def _add_common(parser: argparse.ArgumentParser, *, times_default: str = "") -> None:
    parser.add_argument("--n", type=int, default=16, help="lattice side length")
    parser.add_argument("--alpha", type=float, default=0.5, help="rotation strength, |alpha| < 1")
    parser.add_argument("--t", type=float, default=0.05, help="macroscopic time horizon")
    parser.add_argument("--ensemble", type=int, default=20, help="number of trajectories")
    parser.add_argument("--seed", type=int, default=2024, help="master seed (stream per trajectory)")
    parser.add_argument("--k", type=float, default=3.0, help="dual Sobolev exponent (k > 2)")
    parser.add_argument("--zmax", type=int, default=8, help="Fourier truncation |z|_inf <= zmax")
    parser.add_argument("--profile", default="sin_x(0.5,0.25)",
                        help="initial density profile, e.g. uniform(0.3) or sin_x(0.5,0.25)")
    parser.add_argument("--field", default="",
                        help="vector field by name (const(0.5,0), rot_sin_x(1.0), ...) or CSV path")
    parser.add_argument("--snapshots", default=times_default,
                        help="comma-separated snapshot times in [0, t]")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--workers", type=int, default=2, help="trajectory worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rotsep",
        description="Simulate and verify the face-rotation exclusion process",
    )
    parser.add_argument("--config", help="load an experiment spec from a key = value file")
    sub = parser.add_subparsers(dest="subcommand")

    p_verify = sub.add_parser("verify", help="run the exact finite checks")
    p_verify.add_argument("--exact-n4", action="store_true",
                          help="include the 65536-configuration N=4 balance check")
    p_verify.add_argument("--mutate", default="", choices=["", "diag_double"],
                          help="negative control: corrupt the rates and expect failure")
    p_verify.add_argument("--out", default="out", help="output directory")

    p_sim = sub.add_parser("simulate", help="run an ensemble and store trajectories")
    _add_common(p_sim)
    p_sim.add_argument("--record-events", action="store_true",
                       help="keep the full event log (needed for martingale diagnostics)")

    p_hydro = sub.add_parser("hydro-compare", help="empirical density against the heat flow")
    _add_common(p_hydro)

    p_curr = sub.add_parser("current-compare",
                            help="integrated current against the gradient+rotation prediction")
    _add_common(p_curr)

    p_ein = sub.add_parser("einstein", help="weak-field mobility response and Einstein relation")
    _add_common(p_ein)
    p_ein.set_defaults(profile="uniform(0.3)", field="const(0.5,0)", t=0.2, n=32)

    p_hodge = sub.add_parser("hodge", help="Hodge decomposition verification")
    p_hodge.add_argument("--n", type=int, default=8, help="largest side length (3..8 swept)")
    p_hodge.add_argument("--seed", type=int, default=2024)
    p_hodge.add_argument("--out", default="out")

    return parser


def spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    times = tuple(float(s) for s in getattr(args, "snapshots", "").split(",") if s)
    return ExperimentSpec(
        subcommand=args.subcommand,
        n=getattr(args, "n", 16),
        alpha=getattr(args, "alpha", 0.5),
        t_end=getattr(args, "t", 0.05),
        snapshot_times=times,
        ensemble=getattr(args, "ensemble", 20),
        seed=getattr(args, "seed", 2024),
        k=getattr(args, "k", 3.0),
        z_max=getattr(args, "zmax", 8),
        profile=getattr(args, "profile", "sin_x(0.5,0.25)"),
        ext_field=getattr(args, "field", ""),
        out_dir=getattr(args, "out", "out"),
        exact_n4=getattr(args, "exact_n4", False),
        mutate=getattr(args, "mutate", ""),
        record_events=getattr(args, "record_events", False),
        workers=getattr(args, "workers", 2),
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        spec = ExperimentSpec.from_ini(Path(args.config).read_text())
    elif args.subcommand is None:
        parser.print_usage(sys.stderr)
        return 2
    else:
        try:
            spec = spec_from_args(args)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    try:
        result = run_experiment(spec)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for line in result.lines:
        print(line)
    print(f"artifacts in {result.out_dir}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
