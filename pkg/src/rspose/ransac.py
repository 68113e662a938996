"""RANSAC over the pluggable pose solvers with rolling-shutter-aware scoring.

Hypotheses are scored by reprojection under the hypothesis' own model: the
iterative six-point solutions and the nine-point solution re-solve the
implicit row equation per point, the perspective baseline projects globally.
Per-hypothesis RNG streams are derived from (seed, hypothesis index) so runs
are reproducible regardless of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    AllTripletsDegenerate,
    DegenerateConfiguration,
    NoValidHypothesis,
    TooFewPoints,
)
from .geometry import (
    RsCameraModel,
    perspective_reprojection_errors,
    project_points_rowlinear,
    reprojection_errors,
    stack_correspondences,
    PROJECTION_OK,
)
from .solvers import (
    PoseCandidate,
    R6pVariant,
    R9pSolution,
    SOLVER_IDS,
    SolverConfig,
    p3p,
    r6p_iterative,
    r9p,
)

SAMPLE_SIZES = {
    "p3p": 3,
    "r6p-vc-wt": 6,
    "r6p-vct-w": 6,
    "r6p-vct-wt": 6,
    "r6p-vfix": 6,
    "r9p": 9,
}


@dataclass(frozen=True)
class RansacConfig:
    """Knobs for the hypothesize-and-verify loop.

    ``threshold`` is in pixels; ``units_per_pixel`` converts it into the
    units of the image coordinates (1.0 when coordinates already are pixels,
    frame-extent / rows-per-frame for normalized synthetic frames).
    """

    iterations: int = 1000
    threshold: float = 2.0
    sample_size: int | None = None
    seed: int = 0
    units_per_pixel: float = 1.0
    refit: bool = False
    solver_config: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if self.units_per_pixel <= 0:
            raise ValueError("units_per_pixel must be positive")
        if self.sample_size is not None and self.sample_size < 3:
            raise ValueError("sample_size must be >= 3")


@dataclass(frozen=True)
class RansacResult:
    """Winning model plus its inlier bookkeeping; errors are in pixels."""

    best_model: object
    inlier_mask: np.ndarray
    inlier_count: int
    errors: np.ndarray
    degenerate_samples: int
    hypotheses_evaluated: int


def model_reprojection_errors(model, corrs) -> np.ndarray:
    """Per-point image-unit reprojection errors for any solution kind."""
    if isinstance(model, RsCameraModel):
        return reprojection_errors(model, corrs)
    if isinstance(model, PoseCandidate):
        return perspective_reprojection_errors(model.R, model.C, corrs)
    if isinstance(model, R9pSolution):
        world, image = stack_correspondences(corrs)
        base = world + np.cross(np.broadcast_to(model.v, world.shape), world)
        spin = world @ model.R_RS.T
        proj, _, status = project_points_rowlinear(base, spin, model.C, model.t, 0.0)
        err = np.linalg.norm(proj - image, axis=1)
        err[status != PROJECTION_OK] = np.inf
        return err
    raise TypeError(f"cannot score model of type {type(model).__name__}")


def count_inliers(model, corrs, threshold: float):
    """(count, mask, errors) with ``mask[i] = errors[i] <= threshold``.

    ``threshold`` is in the image coordinate units (callers convert pixels
    beforehand); failed projections score +inf and are never inliers.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    errors = model_reprojection_errors(model, corrs)
    mask = errors <= threshold
    return int(np.count_nonzero(mask)), mask, errors


def _solve_sample(solver_id: str, sample, cfg: SolverConfig):
    """Candidate solutions for one minimal sample (a list for p3p)."""
    if solver_id == "p3p":
        return p3p(sample)
    if solver_id == "r9p":
        return [r9p(sample, cfg)]
    return [r6p_iterative(R6pVariant.parse(solver_id), sample, cfg)]


def _scoring_view(solution):
    if isinstance(solution, (RsCameraModel, PoseCandidate, R9pSolution)):
        return solution
    return solution.model


def ransac(corrs, solver_id: str, cfg: RansacConfig = RansacConfig()) -> RansacResult:
    """Classic hypothesize-and-verify: uniform minimal samples, inlier count
    maximized, ties broken by lower mean inlier error.  Deterministic given
    ``cfg.seed``; degenerate samples are skipped and counted."""
    if solver_id not in SOLVER_IDS:
        raise ValueError(f"unknown solver id {solver_id!r}; expected one of {SOLVER_IDS}")
    world, image = stack_correspondences(corrs)
    arrays = (world, image)
    n = world.shape[0]
    sample_size = cfg.sample_size or SAMPLE_SIZES[solver_id]
    if n < sample_size:
        raise TooFewPoints(f"need at least {sample_size} correspondences, got {n}")
    threshold_units = cfg.threshold * cfg.units_per_pixel

    best = None
    best_key = (-1, np.inf)
    degenerate = 0
    evaluated = 0
    for i in range(cfg.iterations):
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, i)))
        idx = rng.choice(n, size=sample_size, replace=False)
        sample = (world[idx], image[idx])
        try:
            candidates = _solve_sample(solver_id, sample, cfg.solver_config)
        except (DegenerateConfiguration, TooFewPoints, AllTripletsDegenerate):
            degenerate += 1
            continue
        if not candidates:
            degenerate += 1
            continue
        for solution in candidates:
            evaluated += 1
            count, mask, errors = count_inliers(_scoring_view(solution), arrays, threshold_units)
            mean_err = float(np.mean(errors[mask])) if count else np.inf
            key = (count, -mean_err)
            if key > best_key:
                best_key = key
                best = (solution, mask, errors)
    if best is None:
        raise NoValidHypothesis(
            f"all {cfg.iterations} samples were degenerate for solver {solver_id!r}"
        )

    solution, mask, errors = best
    if cfg.refit and np.count_nonzero(mask) >= sample_size:
        try:
            refit_sample = (world[mask], image[mask])
            refit_candidates = _solve_sample(solver_id, refit_sample, cfg.solver_config)
        except (DegenerateConfiguration, TooFewPoints, AllTripletsDegenerate):
            refit_candidates = []
        for refit_solution in refit_candidates:
            count, new_mask, new_errors = count_inliers(
                _scoring_view(refit_solution), arrays, threshold_units)
            mean_err = float(np.mean(new_errors[new_mask])) if count else np.inf
            if (count, -mean_err) >= best_key:
                solution, mask, errors = refit_solution, new_mask, new_errors
                best_key = (count, -mean_err)

    return RansacResult(
        best_model=solution,
        inlier_mask=mask,
        inlier_count=int(np.count_nonzero(mask)),
        errors=errors / cfg.units_per_pixel,
        degenerate_samples=degenerate,
        hypotheses_evaluated=evaluated,
    )
