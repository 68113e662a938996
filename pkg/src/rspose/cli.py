"""Command-line front end: solve, ransac, and bench subcommands.

Reports are flat ``key=value`` lines with ``repr`` floats, so output can be
parsed back losslessly (vectors are space-separated, matrices row-major).
Exit codes: 0 success, 2 input/usage errors, 3 degenerate or unsolvable
configurations, 4 benchmark output I/O failures.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .exceptions import (
    AllTripletsDegenerate,
    CorrespondenceParseError,
    DegenerateConfiguration,
    NoValidHypothesis,
    TooFewPoints,
)
from .fileio import read_correspondence_file, write_inlier_mask
from .geometry import FRAME_HALF_EXTENT, perspective_reprojection_errors
from .ransac import RansacConfig, ransac
from .solvers import (
    PoseCandidate,
    R9pSolution,
    RsPoseSolution,
    SOLVER_IDS,
    SolverConfig,
    solve_with_solver_id,
)
from .synthbench import EXPERIMENT_KINDS, run_experiment

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_DEGENERATE = 3
EXIT_IO = 4

_DEGENERATE_ERRORS = (
    TooFewPoints,
    DegenerateConfiguration,
    AllTripletsDegenerate,
    NoValidHypothesis,
)


def _fmt(values) -> str:
    arr = np.asarray(values, dtype=float).ravel()
    return " ".join(repr(float(value)) for value in arr)


def _emit(lines, out) -> None:
    for key, value in lines:
        print(f"{key}={value}", file=out)


def _model_lines(solution, corrs):
    """Report lines carrying everything needed to rebuild the solution."""
    if isinstance(solution, RsPoseSolution):
        model = solution.model
        return [
            ("converged", "true" if solution.converged else "false"),
            ("iterations", str(solution.iterations_used)),
            ("residual", repr(solution.final_residual)),
            ("v", _fmt(model.v)),
            ("C", _fmt(model.C)),
            ("w", _fmt(model.w)),
            ("t", _fmt(model.t)),
        ]
    if isinstance(solution, R9pSolution):
        return [
            ("residual", repr(solution.residual)),
            ("v", _fmt(solution.v)),
            ("C", _fmt(solution.C)),
            ("t", _fmt(solution.t)),
            ("R_RS", _fmt(solution.R_RS)),
        ]
    if isinstance(solution, PoseCandidate):
        errors = perspective_reprojection_errors(solution.R, solution.C, corrs)
        return [
            ("residual", repr(float(np.mean(errors)))),
            ("R", _fmt(solution.R)),
            ("C", _fmt(solution.C)),
        ]
    raise TypeError(f"cannot report solution of type {type(solution).__name__}")


def _read_input(path, err):
    try:
        return read_correspondence_file(path)
    except CorrespondenceParseError as exc:
        print(f"error: {path}: {exc}", file=err)
    except OSError as exc:
        print(f"error: {exc}", file=err)
    return None


def _units_per_pixel(rows_per_frame) -> float:
    if rows_per_frame is None:
        return 1.0
    return 2.0 * FRAME_HALF_EXTENT / rows_per_frame


def cmd_solve(args, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    data = _read_input(args.input, err)
    if data is None:
        return EXIT_PARSE
    r0 = args.r0 if args.r0 is not None else data.r0
    cfg = SolverConfig(max_iterations=args.max_iters, r0=r0)
    corrs = (data.world, data.image)
    try:
        outcome = solve_with_solver_id(
            args.solver, corrs, cfg, prerotate_p3p=args.prerotate_p3p
        )
    except _DEGENERATE_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=err)
        return EXIT_DEGENERATE
    eval_corrs = corrs
    if outcome.prerotation is not None:
        eval_corrs = (data.world @ outcome.prerotation.T, data.image)
    lines = [
        ("solver", outcome.solver_id),
        ("input", args.input),
        ("n_points", str(data.n_points)),
        ("r0", repr(float(r0))),
    ]
    lines += _model_lines(outcome.solution, eval_corrs)
    if outcome.prerotation is not None:
        lines.append(("prerotation", _fmt(outcome.prerotation)))
    _emit(lines, out)
    return EXIT_OK


def cmd_ransac(args, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    data = _read_input(args.input, err)
    if data is None:
        return EXIT_PARSE
    r0 = args.r0 if args.r0 is not None else data.r0
    rows_per_frame = args.rows_per_frame or data.rows_per_frame
    units = _units_per_pixel(rows_per_frame)
    cfg = RansacConfig(
        iterations=args.iters,
        threshold=args.threshold,
        seed=args.seed,
        units_per_pixel=units,
        solver_config=SolverConfig(
            max_iterations=args.max_iters, r0=r0, track_residuals=False
        ),
    )
    corrs = (data.world, data.image)
    try:
        result = ransac(corrs, args.solver, cfg)
    except _DEGENERATE_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=err)
        return EXIT_DEGENERATE
    mask_path = args.mask_out or f"{args.input}.inliers"
    write_inlier_mask(mask_path, result.inlier_mask)
    inlier_errors = result.errors[result.inlier_mask]
    mean_err = float(np.mean(inlier_errors)) if result.inlier_count else float("nan")
    lines = [
        ("solver", args.solver),
        ("input", args.input),
        ("n_points", str(data.n_points)),
        ("iterations", str(args.iters)),
        ("threshold_px", repr(float(args.threshold))),
        ("units_per_pixel", repr(units)),
        ("seed", str(args.seed)),
        ("inlier_count", str(result.inlier_count)),
        ("inlier_mean_error_px", repr(mean_err)),
        ("degenerate_samples", str(result.degenerate_samples)),
        ("hypotheses", str(result.hypotheses_evaluated)),
        ("mask", mask_path),
    ]
    eval_corrs = (data.world[result.inlier_mask], data.image[result.inlier_mask])
    lines += _model_lines(result.best_model, eval_corrs)
    _emit(lines, out)
    return EXIT_OK


def cmd_bench(args, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    solvers = args.solvers.split(",") if args.solvers else None
    try:
        records = run_experiment(
            args.experiment,
            trials=args.trials,
            solvers=solvers,
            out=args.out,
            seed=args.seed,
            timing=args.timing,
            max_iterations=args.max_iters,
            noise_sigma_px=args.noise_sigma,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_PARSE
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc}", file=err)
        return EXIT_IO
    _emit(
        [
            ("experiment", args.experiment),
            ("trials", str(args.trials)),
            ("seed", str(args.seed)),
            ("out", args.out),
            ("rows", str(len(records))),
        ],
        out,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rspose",
        description="Rolling-shutter absolute pose: solve, ransac, bench.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="estimate a pose from a correspondence file")
    solve.add_argument("--solver", required=True, choices=SOLVER_IDS)
    solve.add_argument("--input", required=True, help="correspondence file (X Y Z r c)")
    solve.add_argument("--r0", type=float, default=None,
                       help="reference shutter row (default: file header or 0)")
    solve.add_argument("--max-iters", type=int, default=5)
    solve.add_argument("--prerotate-p3p", action="store_true",
                       help="pre-rotate world points with the best P3P pose")
    solve.set_defaults(func=cmd_solve)

    rns = sub.add_parser("ransac", help="robustly estimate a pose with outliers")
    rns.add_argument("--solver", required=True, choices=SOLVER_IDS)
    rns.add_argument("--input", required=True)
    rns.add_argument("--r0", type=float, default=None)
    rns.add_argument("--max-iters", type=int, default=5)
    rns.add_argument("--iters", type=int, default=1000, help="RANSAC hypotheses")
    rns.add_argument("--threshold", type=float, default=2.0,
                     help="inlier threshold in pixels")
    rns.add_argument("--rows-per-frame", type=int, default=None,
                     help="sensor rows per frame; converts the pixel threshold "
                          "when image coordinates are normalized")
    rns.add_argument("--seed", type=int, default=0)
    rns.add_argument("--mask-out", default=None,
                     help="inlier mask path (default: <input>.inliers)")
    rns.set_defaults(func=cmd_ransac)

    bench = sub.add_parser("bench", help="run a synthetic benchmark sweep")
    bench.add_argument("--experiment", required=True, choices=EXPERIMENT_KINDS)
    bench.add_argument("--trials", type=int, default=500)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", required=True, help="CSV output path")
    bench.add_argument("--timing", action="store_true",
                       help="fill wall_time with measured seconds (breaks "
                            "byte-reproducibility)")
    bench.add_argument("--solvers", default=None,
                       help="comma-separated solver ids (default: per experiment)")
    bench.add_argument("--max-iters", type=int, default=5)
    bench.add_argument("--noise-sigma", type=float, default=1.0,
                       help="image noise in pixels for fixed-noise sweeps")
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
