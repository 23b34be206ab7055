#!/usr/bin/env python3
"""
hullwalk command-line interface.

Usage:
    hullwalk simulate --model sphere --n 5 --steps 200 --format csv
    hullwalk absorb --model bm --grid geometric --ratio 4 --n 3 --steps 40 --trials 2000
    hullwalk check --suite all

Every subcommand writes one report (JSON by default) to --out or stdout.
Angles are in radians. Exit codes: 0 on success, 1 on usage, configuration
or IO errors, 2 on a numerical failure or a failed invariant check (a
partial report is still written).
"""

import argparse
import logging
import math
import os
import sys

import numpy as np

from hullwalk import checks, conelab, harness, numkit, widthlab
from hullwalk.config import RunConfig, load_environment, setup_logging
from hullwalk.errors import ConfigError, NumericalFailure, Unresolved
from hullwalk.randwalk import RngStream, grid_geometric
from hullwalk.report import emit_report
from hullwalk.witness import Schedule

logger = logging.getLogger('hullwalk.cli')

COMMON = ("command", "seed", "jobs", "out", "format", "verbose", "log_file", "env_file", "timing")

MODEL_PARAMS = ("model", "grid", "n", "steps", "t1", "ratio", "intensity", "theta")

PARAMS = {
    "simulate": MODEL_PARAMS,
    "absorb": MODEL_PARAMS + ("trials", "confidence"),
    "threshold": MODEL_PARAMS + ("target", "trials", "max_steps"),
    "cover": ("theta", "n", "trials", "cap"),
    "width": ("cone", "size", "ratio", "theta", "n", "trials", "volume_trials"),
    "escape": ("rows", "n", "trials"),
    "witness": ("n", "blocks", "cf", "ch", "outer", "inner", "alpha_base", "j0_fraction", "no_guard",
                "trials", "compare_hull", "sweep", "cf_values", "ch_values", "j0_values", "alpha_values"),
    "check": ("suite", "n", "trials"),
}


class ArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises ConfigError instead of exiting on bad usage."""

    def error(self, message):
        raise ConfigError(message)


def _model_flags(parser, n=2, steps=100):
    parser.add_argument("--model", choices=("bm", "zn", "sphere"), default="bm", help="Walk model (default: bm)")
    parser.add_argument("--grid", choices=("uniform", "geometric", "poisson"), default="uniform",
                        help="Observation grid (default: uniform)")
    parser.add_argument("--n", type=int, default=n, help=f"Dimension (default: {n})")
    parser.add_argument("--steps", type=int, default=steps, help=f"Number of points N (default: {steps})")
    parser.add_argument("--t1", type=float, default=1.0, help="First time of a geometric grid (default: 1)")
    parser.add_argument("--ratio", type=float, default=2.0, help="Geometric grid ratio K (default: 2)")
    parser.add_argument("--intensity", type=float, default=100.0, help="Poisson grid intensity (default: 100)")
    parser.add_argument("--theta", type=float, default=math.pi / 3, help="Sphere walk angle in radians (default: pi/3)")


def build_parser():
    """Build the argument parser with one subparser per experiment."""
    common = ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="Root seed (default: HULLWALK_SEED or 0)")
    common.add_argument("--jobs", type=int, help="Worker threads (default: HULLWALK_JOBS or 1)")
    common.add_argument("--out", help="Report file (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json", help="Report format (default: json)")
    common.add_argument("--timing", action="store_true", help="Include wall time in JSON reports")
    common.add_argument("--verbose", action="store_true", help="Enable verbose logging")
    common.add_argument("--log-file", help="Path to log file (default: HULLWALK_LOG_FILE)")
    common.add_argument("--env-file", default=".env", help="Environment file to load (default: .env)")

    parser = ArgumentParser(prog="hullwalk",
                            description="Random walks and the convex hulls they leave behind")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("simulate", parents=[common], help="Simulate one walk and write its path")
    _model_flags(p, n=3)

    p = sub.add_parser("absorb", parents=[common], help="Estimate P{0 in conv(walk)}")
    _model_flags(p)
    p.add_argument("--trials", type=int, default=1000, help="Number of walks (default: 1000)")
    p.add_argument("--confidence", type=float, default=0.95, help="Interval coverage (default: 0.95)")

    p = sub.add_parser("threshold", parents=[common], help="Smallest N reaching a target absorption probability")
    _model_flags(p)
    p.add_argument("--target", type=float, default=0.5, help="Target probability (default: 0.5)")
    p.add_argument("--trials", type=int, default=200, help="Walks per rung of the search (default: 200)")
    p.add_argument("--max-steps", type=int, default=1 << 16, help="Largest N tried (default: 65536)")

    p = sub.add_parser("cover", parents=[common], help="Covering times of the sphere walk")
    p.add_argument("--theta", type=float, default=math.pi / 3, help="Step angle in radians (default: pi/3)")
    p.add_argument("--n", type=int, default=5, help="Dimension (default: 5)")
    p.add_argument("--trials", type=int, default=200, help="Number of walks (default: 200)")
    p.add_argument("--cap", type=int, default=10000, help="Steps before a walk is censored (default: 10000)")

    p = sub.add_parser("width", parents=[common], help="Gaussian widths of a walk cone and its polar")
    p.add_argument("--cone", choices=("identity", "bm", "sphere", "full"), default="identity",
                   help="Cone matrix (default: identity)")
    p.add_argument("--size", type=int, default=20, help="Cone dimension N (default: 20)")
    p.add_argument("--ratio", type=float, default=4.0, help="Geometric grid ratio K for --cone bm (default: 4)")
    p.add_argument("--theta", type=float, default=math.pi / 3, help="Angle for --cone sphere (default: pi/3)")
    p.add_argument("--n", type=int, help="Walk dimension for --cone sphere (default: --size)")
    p.add_argument("--trials", type=int, default=2000, help="Gaussian samples (default: 2000)")
    p.add_argument("--volume-trials", type=int, default=100000,
                   help="Ball samples for the polar volume ratio, N <= 25 only (default: 100000)")

    p = sub.add_parser("escape", parents=[common], help="Escape frequency of Gaussian matrices")
    p.add_argument("--rows", type=int, default=20, help="Rows N (default: 20)")
    p.add_argument("--n", type=int, default=3, help="Columns n (default: 3)")
    p.add_argument("--trials", type=int, default=1000, help="Number of matrices (default: 1000)")

    p = sub.add_parser("witness", parents=[common], help="Run the minimax witness pipeline")
    p.add_argument("--n", type=int, default=64, help="Dimension (default: 64)")
    p.add_argument("--blocks", type=int, default=4, help="Number of blocks (default: 4)")
    p.add_argument("--cf", type=float, default=0.02, help="Threshold constant C_f (default: 0.02)")
    p.add_argument("--ch", type=float, help="Threshold constant C_h (default: coupled to C_f)")
    p.add_argument("--outer", type=int, default=2, help="Refinement levels M (default: 2)")
    p.add_argument("--inner", type=int, default=2, help="Substeps per level (default: 2)")
    p.add_argument("--alpha-base", type=float, default=1.25, help="Perturbation size base (default: 1.25)")
    p.add_argument("--j0-fraction", type=float, default=0.45, help="Share of coordinates for J0 (default: 0.45)")
    p.add_argument("--no-guard", action="store_true",
                   help="Keep every refinement step, even one that raises the final block statistic")
    p.add_argument("--trials", type=int, default=100, help="Number of paths (default: 100)")
    p.add_argument("--compare-hull", action="store_true",
                   help="Also test absorption on the same paths")
    p.add_argument("--sweep", action="store_true",
                   help="Run every combination of the value lists below on shared paths")
    p.add_argument("--cf-values", type=float, nargs="+", default=[0.01, 0.02, 0.04],
                   help="C_f values for --sweep (default: 0.01 0.02 0.04)")
    p.add_argument("--ch-values", type=float, nargs="+",
                   help="C_h values for --sweep (default: coupled to each C_f)")
    p.add_argument("--j0-values", type=float, nargs="+", default=[0.4, 0.45, 0.5],
                   help="J0 shares for --sweep (default: 0.4 0.45 0.5)")
    p.add_argument("--alpha-values", type=float, nargs="+", default=[1.25, 2.0, 16.0],
                   help="Perturbation size bases for --sweep (default: 1.25 2 16)")

    p = sub.add_parser("check", parents=[common], help="Run invariant suites")
    p.add_argument("--suite", choices=tuple(checks.SUITES) + ("all",), default="all",
                   help="Suite to run (default: all)")
    p.add_argument("--n", type=int, default=10, help="Dimension (default: 10)")
    p.add_argument("--trials", type=int, default=1000, help="Trial budget per suite (default: 1000)")

    return parser


def _model(params):
    return harness.WalkModel(kind=params["model"], grid=params["grid"], t1=params["t1"],
                             ratio=params["ratio"], intensity=params["intensity"], theta=params["theta"])


def run_simulate(params, rng, jobs):
    path = _model(params).simulate(params["n"], params["steps"], rng)
    if path is None:
        return {"path": {"times": [], "points": []}, "points": 0}
    return {"path": {"times": path.grid.times.tolist(), "points": path.points.tolist()},
            "points": len(path), "model": path.model}


def run_absorb(params, rng, jobs):
    estimate = harness.absorption_probability(_model(params), params["n"], params["steps"], params["trials"],
                                              rng, jobs=jobs, confidence=params["confidence"])
    return {"absorption": estimate.to_dict()}


def run_threshold(params, rng, jobs):
    result = harness.absorption_threshold(_model(params), params["n"], params["target"], params["trials"],
                                          rng, max_N=params["max_steps"], jobs=jobs)
    return result.to_dict()


def run_cover(params, rng, jobs):
    return harness.covering_time(params["theta"], params["n"], params["trials"], params["cap"], rng,
                                 jobs=jobs).to_dict()


def _cone(params):
    N = params["size"]
    if params["cone"] == "full":
        return widthlab.ConeSpec.full(N)
    if params["cone"] == "identity":
        return widthlab.ConeSpec(np.eye(N))
    if params["cone"] == "bm":
        return widthlab.ConeSpec(conelab.build_prefix_matrix_bm(grid_geometric(1.0, params["ratio"], N)))
    return widthlab.ConeSpec(conelab.build_ftilde_sphere(params["theta"], N, params["n"] or N))


def run_width(params, rng, jobs):
    spec = _cone(params)
    N = spec.N
    wC, wCstar, ok = widthlab.width_budget_check(spec, params["trials"], rng.substream(0))
    results = {"N": N, "wC": wC.to_dict(), "wCstar": wCstar.to_dict(), "budget_ok": ok}
    if params["cone"] == "identity":
        results["orthant_width_exact"] = widthlab.orthant_width_exact(N)
    if not spec.full_space:
        condition = numkit.condition_number(spec.F.entries)
        results["condition_number"] = condition
        results["condition_width_bound"] = widthlab.cone_width_bound(min(1.0, 1.0 / condition), N)
    if N <= 25 and params["volume_trials"] >= 1000:
        ratio = widthlab.polar_volume_ratio(spec, params["volume_trials"], rng.substream(1))
        results["polar_volume_ratio"] = ratio
        if ratio > 0.0:
            results["volume_width_bound"] = widthlab.volume_ratio_width_bound(N, ratio)
    return results


def run_escape(params, rng, jobs):
    return harness.escape_experiment(params["rows"], params["n"], params["trials"], rng, jobs=jobs)


def run_witness(params, rng, jobs):
    sched = Schedule(C_f=params["cf"], C_h=params["ch"], M=params["outer"], M_inner=params["inner"],
                     alpha_base=params["alpha_base"], j0_fraction=params["j0_fraction"],
                     guard=not params["no_guard"])
    if params["sweep"]:
        return harness.witness_sweep(params["n"], params["blocks"], params["trials"], rng.substream(0),
                                     C_f_values=params["cf_values"],
                                     C_h_values=params["ch_values"] or [None],
                                     j0_fractions=params["j0_values"],
                                     alpha_bases=params["alpha_values"], base=sched, jobs=jobs)
    results = harness.witness_experiment(params["n"], params["blocks"], sched, params["trials"],
                                         rng.substream(0), jobs=jobs)
    if params["compare_hull"]:
        both = harness.minimax_two_sided(params["n"], params["blocks"], sched, params["trials"],
                                         rng.substream(1), jobs=jobs)
        results["same_paths"] = {"absorbed": both["absorbed"].to_dict(),
                                 "witnessed": both["witnessed"].to_dict(), "both": both["both"]}
    return results


def run_check(params, rng, jobs):
    outcome = checks.run_suite(params["suite"], params["n"], params["trials"], rng)
    return {
        "suites": {name: [check.to_dict() for check in results] for name, results in outcome.items()},
        "passed": all(check.passed for results in outcome.values() for check in results),
    }


HANDLERS = {
    "simulate": run_simulate,
    "absorb": run_absorb,
    "threshold": run_threshold,
    "cover": run_cover,
    "width": run_width,
    "escape": run_escape,
    "witness": run_witness,
    "check": run_check,
}


def _failure_results(error):
    results = {"error": {"type": type(error).__name__, "message": str(error)}}
    if isinstance(error, Unresolved) and error.ladder:
        results["ladder"] = [{"N": N, **estimate.to_dict()} for N, estimate in error.ladder]
    return results


def run(config):
    """
    Run one configured experiment.

    Returns:
        tuple: (ExperimentReport, exit code)
    """
    rng = RngStream(config.seed)
    handler = HANDLERS[config.subcommand]
    try:
        report = harness.timed(config.subcommand, config.echo(),
                               lambda: handler(config.params, rng, config.jobs))
    except NumericalFailure as e:
        logger.error(f"{config.subcommand} failed: {e}")
        report = harness.ExperimentReport(experiment=config.subcommand, parameters=config.echo(),
                                          results=_failure_results(e))
        return report, 2
    if config.subcommand == "check" and not report.results["passed"]:
        return report, 2
    return report, 0


def main(argv=None):
    """Main function."""
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 0

    load_environment(args.env_file)
    setup_logging(args.verbose, args.log_file or os.getenv("HULLWALK_LOG_FILE"))

    params = {key: value for key, value in vars(args).items() if key not in COMMON}
    try:
        config = RunConfig.build(args.command, params, PARAMS[args.command], seed=args.seed,
                                 jobs=args.jobs, out_path=args.out, fmt=args.format)
        report, code = run(config)
    except (ConfigError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1

    try:
        emit_report(report, config.fmt, config.out_path, timing=args.timing)
    except OSError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
