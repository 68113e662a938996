"""HTTP service exposing the pose solvers.

Endpoints mirror the library: ``POST /solve`` and ``POST /ransac`` take
correspondences inline (world ``[x, y, z]`` and image ``[row, col]`` lists),
``GET /solvers`` lists the available solver ids with their minimal sample
sizes.  Domain failures (too few points, degenerate geometry, no usable
hypothesis) map to HTTP 400; malformed payloads are left to the framework's
422 validation.

Run with ``uvicorn rspose.service:app``.
"""

from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, model_validator

from .exceptions import RsPoseError
from .geometry import perspective_reprojection_errors
from .ransac import SAMPLE_SIZES, RansacConfig, ransac
from .solvers import (
    PoseCandidate,
    R9pSolution,
    RsPoseSolution,
    SOLVER_IDS,
    SolverConfig,
    solve_with_solver_id,
)

SolverId = Literal["p3p", "r6p-vc-wt", "r6p-vct-w", "r6p-vct-wt", "r6p-vfix", "r9p"]


class CorrespondencesIn(BaseModel):
    """Shared request base: the 2D-3D correspondences and solver knobs."""

    solver: SolverId
    world: list[list[float]] = Field(min_length=3)
    image: list[list[float]] = Field(min_length=3)
    r0: float = 0.0
    max_iters: int = Field(default=5, ge=1)

    @model_validator(mode="after")
    def _check_shapes(self):
        if len(self.world) != len(self.image):
            raise ValueError("world and image must have the same length")
        if any(len(row) != 3 for row in self.world):
            raise ValueError("world rows must be [x, y, z]")
        if any(len(row) != 2 for row in self.image):
            raise ValueError("image rows must be [row, col]")
        return self

    def arrays(self):
        return (
            np.asarray(self.world, dtype=float),
            np.asarray(self.image, dtype=float),
        )

    def solver_config(self) -> SolverConfig:
        return SolverConfig(max_iterations=self.max_iters, r0=self.r0)


class SolveRequest(CorrespondencesIn):
    prerotate_p3p: bool = False


class RansacRequest(CorrespondencesIn):
    iterations: int = Field(default=1000, ge=1)
    threshold_px: float = Field(default=2.0, gt=0)
    seed: int = 0
    units_per_pixel: float = Field(default=1.0, gt=0)


class SolutionOut(BaseModel):
    kind: Literal["rolling-shutter", "nine-point", "perspective"]
    residual: float
    C: list[float]
    v: Optional[list[float]] = None
    w: Optional[list[float]] = None
    t: Optional[list[float]] = None
    R: Optional[list[list[float]]] = None
    R_RS: Optional[list[list[float]]] = None
    converged: Optional[bool] = None
    iterations: Optional[int] = None


class SolveResponse(BaseModel):
    solver: str
    n_points: int
    solution: SolutionOut
    prerotation: Optional[list[list[float]]] = None


class RansacResponse(BaseModel):
    solver: str
    n_points: int
    solution: SolutionOut
    inlier_count: int
    inlier_mask: list[bool]
    inlier_mean_error_px: Optional[float] = None
    degenerate_samples: int
    hypotheses: int


class SolverInfo(BaseModel):
    solver: str
    sample_size: int
    iterative: bool


def _solution_out(solution, corrs) -> SolutionOut:
    if isinstance(solution, RsPoseSolution):
        model = solution.model
        return SolutionOut(
            kind="rolling-shutter",
            residual=solution.final_residual,
            C=model.C.tolist(),
            v=model.v.tolist(),
            w=model.w.tolist(),
            t=model.t.tolist(),
            converged=solution.converged,
            iterations=solution.iterations_used,
        )
    if isinstance(solution, R9pSolution):
        return SolutionOut(
            kind="nine-point",
            residual=solution.residual,
            C=solution.C.tolist(),
            v=solution.v.tolist(),
            t=solution.t.tolist(),
            R_RS=solution.R_RS.tolist(),
        )
    if isinstance(solution, PoseCandidate):
        errors = perspective_reprojection_errors(solution.R, solution.C, corrs)
        return SolutionOut(
            kind="perspective",
            residual=float(np.mean(errors)),
            C=solution.C.tolist(),
            R=solution.R.tolist(),
        )
    raise TypeError(f"cannot serialize solution of type {type(solution).__name__}")


def create_app() -> FastAPI:
    app = FastAPI(title="rspose", version="0.1.0")

    @app.exception_handler(RsPoseError)
    async def _domain_error(_: Request, exc: RsPoseError):
        return JSONResponse(
            status_code=400,
            content={"detail": str(exc), "error": type(exc).__name__},
        )

    @app.get("/solvers", response_model=list[SolverInfo])
    def solvers():
        return [
            SolverInfo(
                solver=solver_id,
                sample_size=SAMPLE_SIZES[solver_id],
                iterative=solver_id.startswith("r6p"),
            )
            for solver_id in SOLVER_IDS
        ]

    @app.post("/solve", response_model=SolveResponse)
    def solve(req: SolveRequest):
        corrs = req.arrays()
        outcome = solve_with_solver_id(
            req.solver, corrs, req.solver_config(), prerotate_p3p=req.prerotate_p3p
        )
        eval_corrs = corrs
        if outcome.prerotation is not None:
            eval_corrs = (corrs[0] @ outcome.prerotation.T, corrs[1])
        return SolveResponse(
            solver=outcome.solver_id,
            n_points=corrs[0].shape[0],
            solution=_solution_out(outcome.solution, eval_corrs),
            prerotation=(
                outcome.prerotation.tolist()
                if outcome.prerotation is not None
                else None
            ),
        )

    @app.post("/ransac", response_model=RansacResponse)
    def run_ransac(req: RansacRequest):
        corrs = req.arrays()
        cfg = RansacConfig(
            iterations=req.iterations,
            threshold=req.threshold_px,
            seed=req.seed,
            units_per_pixel=req.units_per_pixel,
            solver_config=SolverConfig(
                max_iterations=req.max_iters, r0=req.r0, track_residuals=False
            ),
        )
        result = ransac(corrs, req.solver, cfg)
        mask = result.inlier_mask
        inlier_errors = result.errors[mask]
        return RansacResponse(
            solver=req.solver,
            n_points=corrs[0].shape[0],
            solution=_solution_out(
                result.best_model, (corrs[0][mask], corrs[1][mask])
            ),
            inlier_count=result.inlier_count,
            inlier_mask=mask.tolist(),
            inlier_mean_error_px=(
                float(np.mean(inlier_errors)) if result.inlier_count else None
            ),
            degenerate_samples=result.degenerate_samples,
            hypotheses=result.hypotheses_evaluated,
        )

    return app


app = create_app()
