"""Linear rolling-shutter absolute pose solvers.

Every solver starts from the depth-eliminated projection constraints: the
model equation is left-multiplied by ``skew([r, c, 1])``, which cancels the
unknown depth and leaves (per correspondence) three rows of rank 2.  We keep
the two largest-norm rows.  Holding the right parameter subsets fixed makes
the constraints linear, and each subset solve is a small least-squares
problem handled by a column-pivoted QR factorization with rank detection.

Four iterative six-point strategies and one non-iterative nine-point solver
are provided, plus a three-point perspective baseline used both for
comparison and for pre-rotating the scene so the linearized orientation is
valid near identity.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.linalg import get_lapack_funcs

from .exceptions import (
    AllTripletsDegenerate,
    DegenerateConfiguration,
    TooFewPoints,
)
from . import geometry
from .geometry import (
    Correspondence,
    RsCameraModel,
    algebraic_residual,
    as_vec3,
    keep_row_indices,
    perspective_reprojection_errors,
    require_rotation,
    skew,
    skew_batch,
    stack_correspondences,
)

_gelsy, = get_lapack_funcs(("gelsy",), (np.empty((2, 2)), np.empty((2, 1))))

MIN_POINTS_R6P = 6
MIN_POINTS_R9P = 9

LAYOUTS = ("vC", "wt", "vCt", "w", "full", "r9p")

SOLVER_IDS = ("p3p", "r6p-vc-wt", "r6p-vct-w", "r6p-vct-wt", "r6p-vfix", "r9p")


@dataclass(frozen=True)
class SolverConfig:
    """Shared knobs for the linear solvers and the iteration driver."""

    max_iterations: int = 5
    param_tol: float = 1e-8
    rank_tol: float = 1e-10
    r0: float = 0.0
    residual_tol: float = 1e-12
    track_residuals: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.param_tol <= 0 or self.rank_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.residual_tol < 0:
            raise ValueError("residual_tol must be >= 0")


class R6pVariant(enum.Enum):
    """Iteration schedules; named after the estimated/fixed parameter split."""

    VC_WT = "r6p-vc-wt"
    VCT_W = "r6p-vct-w"
    VCT_WT = "r6p-vct-wt"
    VCWT_VFIX = "r6p-vfix"

    @classmethod
    def parse(cls, value) -> "R6pVariant":
        if isinstance(value, cls):
            return value
        for member in cls:
            if value in (member.name, member.value):
                return member
        raise ValueError(f"unknown R6P variant {value!r}")


@dataclass(frozen=True)
class RsPoseSolution:
    """Result of an iterative solver: one model plus convergence diagnostics.

    ``residual_trace`` holds the double-linearized RMS residual after every
    half-step (two entries per iteration for the alternating variants, one
    for the all-parameter variant); empty when tracking is disabled.
    """

    model: RsCameraModel
    iterations_used: int
    final_residual: float
    converged: bool
    residual_trace: tuple[float, ...] = ()


@dataclass(frozen=True)
class R9pSolution:
    """Nine-point linear solution; the 3x3 motion matrix replaces the product
    of the per-row rotation and the orientation and is left unconstrained, so
    no angular velocity can be read off it."""

    v: np.ndarray
    C: np.ndarray
    t: np.ndarray
    R_RS: np.ndarray
    residual: float

    def model(self) -> RsCameraModel:
        """Pose-only view (v, C) with zero velocities, for error metrics."""
        z = np.zeros(3)
        return RsCameraModel(self.v, self.C, z, z)


@dataclass(frozen=True)
class PoseCandidate:
    """Global-shutter pose: a proper rotation and translation."""

    R: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", require_rotation(self.R, name="R"))
        object.__setattr__(self, "C", as_vec3(self.C, "C"))


def lstsq_colpivot(a: np.ndarray, b: np.ndarray, rank_tol: float):
    """Least squares via column-pivoted orthogonal factorization.

    Returns (solution, rank); rank is detected at ``rank_tol`` so callers can
    reject degenerate systems instead of silently using a minimum-norm fill.
    """
    a = np.ascontiguousarray(a, dtype=float)
    m, n = a.shape
    mn = min(m, n)
    lwork = mn + max(2 * mn, n + 1, mn + 1) * 32
    _, x, _, rank, info = _gelsy(
        a, b.reshape(m, 1), np.zeros(n, dtype=np.int32), rank_tol, lwork, False, False
    )
    if info != 0:
        raise RuntimeError(f"least-squares factorization failed (info={info})")
    return x[:n, 0].copy(), int(rank)


def _check_rows_distinct(image: np.ndarray):
    rows = image[:, 0]
    scale = max(1.0, float(np.max(np.abs(rows))))
    if float(np.ptp(rows)) <= 1e-12 * scale:
        raise DegenerateConfiguration(
            "all image rows are equal: rolling-shutter terms are unobservable"
        )


class _EliminatedSystem:
    """Depth-eliminated constraint rows for one correspondence set.

    Caches everything that does not depend on the model parameters: the two
    kept skew rows per point ``sk``, their products with the point cross
    matrices ``sx``, the per-row shutter offsets and the constant right-hand
    side.  Iterative schedules rebuild only the parameter-dependent blocks,
    which keeps a single refinement step cheap.
    """

    __slots__ = ("n", "world", "a", "ak", "sk", "sx", "b0", "x_skew")

    def __init__(self, world: np.ndarray, image: np.ndarray, r0: float):
        n = world.shape[0]
        self.n = n
        self.world = world
        self.a = image[:, 0] - r0
        self.ak = self.a[:, None, None]
        s = skew_batch(np.concatenate([image, np.ones((n, 1))], axis=1))
        keep = keep_row_indices(image)
        flat = (np.arange(n)[:, None] * 3 + keep).ravel()
        self.sk = s.reshape(3 * n, 3)[flat].reshape(n, 2, 3)
        self.x_skew = skew_batch(world)
        self.sx = self.sk @ self.x_skew
        self.b0 = -(self.sk @ world[:, :, None]).ravel()

    def _sk_rotated(self, w) -> np.ndarray:
        """Rows of S (I + a [w]x), the per-row rotation folded into the
        constraint rows."""
        return self.sk + self.ak * (self.sk @ skew(as_vec3(w, "w")))

    def _shifted(self, v) -> np.ndarray:
        """(I + [v]x) applied to every world point."""
        return self.world - self.world @ skew(as_vec3(v, "v"))

    def _stack(self, blocks) -> np.ndarray:
        return np.concatenate(blocks, axis=2).reshape(2 * self.n, -1)

    def system(self, layout: str, *, v=None, C=None, w=None, t=None, vhat=None):
        n = self.n
        if layout == "vC":
            skm = self._sk_rotated(w)
            rhs = (skm @ self.world[:, :, None])[:, :, 0] \
                + self.a[:, None] * (self.sk @ as_vec3(t, "t"))
            return self._stack([-(skm @ self.x_skew), self.sk]), -rhs.ravel()

        if layout == "wt":
            y = self._shifted(v)
            block_w = -(self.ak * (self.sk @ skew_batch(y)))
            rhs = (self.sk @ y[:, :, None])[:, :, 0] + self.sk @ as_vec3(C, "C")
            return self._stack([block_w, self.ak * self.sk]), -rhs.ravel()

        if layout == "vCt":
            skm = self._sk_rotated(w)
            rhs = (skm @ self.world[:, :, None])[:, :, 0]
            return (
                self._stack([-(skm @ self.x_skew), self.sk, self.ak * self.sk]),
                -rhs.ravel(),
            )

        if layout == "w":
            y = self._shifted(v)
            block_w = -(self.ak * (self.sk @ skew_batch(y)))
            u = y + as_vec3(C, "C") + self.a[:, None] * as_vec3(t, "t")
            return block_w.reshape(2 * n, 3), -(self.sk @ u[:, :, None]).ravel()

        if layout == "full":
            vhat = as_vec3(vhat, "vhat")
            sz = self.sk @ skew_batch(self._shifted(vhat)) if vhat.any() else self.sx
            return (
                self._stack([-self.sx, self.sk, -(self.ak * sz), self.ak * self.sk]),
                self.b0,
            )

        if layout == "r9p":
            # (S @ kron(I, X^T))[i, 3j+k] = S[i, j] * X[k]
            block_m = self.ak * np.einsum(
                "nij,nk->nijk", self.sk, self.world
            ).reshape(n, 2, 9)
            return (
                self._stack([-self.sx, self.sk, self.ak * self.sk, block_m]),
                self.b0,
            )

        raise ValueError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")


def assemble_system(layout: str, world: np.ndarray, image: np.ndarray, r0: float,
                    *, v=None, C=None, w=None, t=None, vhat=None):
    """Build the linear system ``A theta = b`` for one unknown layout.

    Unknown orderings: vC -> [v, C]; wt -> [w, t]; vCt -> [v, C, t];
    w -> [w]; full -> [v, C, w, t]; r9p -> [v, C, t, vec(R_RS) row-major].
    """
    world = np.asarray(world, dtype=float).reshape(-1, 3)
    image = np.asarray(image, dtype=float).reshape(-1, 2)
    sys_ = _EliminatedSystem(world, image, r0)
    return sys_.system(layout, v=v, C=C, w=w, t=t, vhat=vhat)


def eliminate_depth(corr: Correspondence, layout: str, r0: float = 0.0,
                    *, v=None, C=None, w=None, t=None, vhat=None):
    """Two depth-eliminated constraint rows and right-hand sides for one
    correspondence in the requested unknown ordering."""
    world, image = stack_correspondences([corr])
    return assemble_system(layout, world, image, r0, v=v, C=C, w=w, t=t, vhat=vhat)


def _solve_system(sys_: _EliminatedSystem, layout, cfg, n_unknowns, **fixed):
    a, b = sys_.system(layout, **fixed)
    theta, rank = lstsq_colpivot(a, b, cfg.rank_tol)
    if rank < n_unknowns:
        raise DegenerateConfiguration(
            f"system rank {rank} < {n_unknowns} for layout {layout!r}"
        )
    return theta


def _solve_layout(layout, corrs, cfg, n_unknowns, min_points, check_rows, **fixed):
    world, image = stack_correspondences(corrs)
    if world.shape[0] < min_points:
        raise TooFewPoints(
            f"layout {layout!r} needs at least {min_points} correspondences, "
            f"got {world.shape[0]}"
        )
    if check_rows:
        _check_rows_distinct(image)
    sys_ = _EliminatedSystem(world, image, cfg.r0)
    return _solve_system(sys_, layout, cfg, n_unknowns, **fixed)


def solve_vC(corrs, w, t, cfg: SolverConfig = SolverConfig()):
    """Orientation and center with the rolling-shutter velocities held fixed."""
    theta = _solve_layout("vC", corrs, cfg, 6, MIN_POINTS_R6P, False, w=w, t=t)
    return theta[0:3], theta[3:6]


def solve_wt(corrs, v, C, cfg: SolverConfig = SolverConfig()):
    """Rolling-shutter velocities with the camera parameters held fixed."""
    theta = _solve_layout("wt", corrs, cfg, 6, MIN_POINTS_R6P, True, v=v, C=C)
    return theta[0:3], theta[3:6]


def solve_vCt(corrs, w, cfg: SolverConfig = SolverConfig()):
    """Orientation, center and translational velocity with rotation rate fixed."""
    theta = _solve_layout("vCt", corrs, cfg, 9, MIN_POINTS_R6P, True, w=w)
    return theta[0:3], theta[3:6], theta[6:9]


def solve_w(corrs, v, C, t, cfg: SolverConfig = SolverConfig()):
    """Rotation rate only, everything else fixed."""
    theta = _solve_layout("w", corrs, cfg, 3, MIN_POINTS_R6P, True, v=v, C=C, t=t)
    return theta


def solve_full_fixed_vhat(corrs, vhat, cfg: SolverConfig = SolverConfig()):
    """All twelve parameters in one solve; the bilinear rotation product is
    frozen at ``vhat`` so the system stays linear.  The estimated v may differ
    from vhat, which is what drives the iteration."""
    theta = _solve_layout("full", corrs, cfg, 12, MIN_POINTS_R6P, True, vhat=vhat)
    return theta[0:3], theta[3:6], theta[6:9], theta[9:12]


def r9p(corrs, cfg: SolverConfig = SolverConfig()) -> R9pSolution:
    """Non-iterative nine-point solve with an unconstrained motion matrix."""
    world, image = stack_correspondences(corrs)
    if world.shape[0] < MIN_POINTS_R9P:
        raise TooFewPoints(
            f"r9p needs at least {MIN_POINTS_R9P} correspondences, got {world.shape[0]}"
        )
    _check_rows_distinct(image)
    a, b = _EliminatedSystem(world, image, cfg.r0).system("r9p")
    theta, rank = lstsq_colpivot(a, b, cfg.rank_tol)
    if rank < 18:
        raise DegenerateConfiguration(f"system rank {rank} < 18 for r9p")
    resid = a @ theta - b
    return R9pSolution(
        v=theta[0:3],
        C=theta[3:6],
        t=theta[6:9],
        R_RS=theta[9:18].reshape(3, 3),
        residual=float(np.sqrt(np.mean(resid * resid))),
    )


def _params_vector(v, C, w, t):
    return np.concatenate([v, C, w, t])


def r6p_iterative(variant, corrs, cfg: SolverConfig = SolverConfig()) -> RsPoseSolution:
    """Run one iterative six-point schedule until the parameters settle.

    Schedules:
      VC_WT      alternate (v, C) <- (w, t) fixed, then (w, t) <- (v, C) fixed
      VCT_W      alternate (v, C, t) <- w fixed, then w alone
      VCT_WT     (v, C, t) <- w fixed, then re-estimate (w, t) from (v, C)
      VCWT_VFIX  one twelve-unknown solve per iteration with the bilinear
                 term frozen at the previous v (zero in the first iteration)

    Stops when the largest parameter change drops below ``param_tol`` or the
    residual falls below ``residual_tol``; sub-solver failures propagate from
    the first iteration only, later ones return the last iterate unconverged.
    """
    variant = R6pVariant.parse(variant)
    world, image = stack_correspondences(corrs)
    if world.shape[0] < MIN_POINTS_R6P:
        raise TooFewPoints(
            f"{variant.value} needs at least {MIN_POINTS_R6P} correspondences, "
            f"got {world.shape[0]}"
        )
    _check_rows_distinct(image)
    sys_ = _EliminatedSystem(world, image, cfg.r0)
    corr_arrays = (world, image)
    zero = np.zeros(3)
    w = zero
    t = zero
    vhat = zero
    params = None
    last = None
    trace: list[float] = []
    iterations = 0
    converged = False

    def residual_at(v_, c_, w_, t_):
        return algebraic_residual(RsCameraModel(v_, c_, w_, t_, cfg.r0), corr_arrays)

    for k in range(cfg.max_iterations):
        try:
            if variant is R6pVariant.VC_WT:
                theta = _solve_system(sys_, "vC", cfg, 6, w=w, t=t)
                v, C = theta[0:3], theta[3:6]
                if cfg.track_residuals:
                    trace.append(residual_at(v, C, w, t))
                theta = _solve_system(sys_, "wt", cfg, 6, v=v, C=C)
                w, t = theta[0:3], theta[3:6]
            elif variant is R6pVariant.VCT_W:
                theta = _solve_system(sys_, "vCt", cfg, 9, w=w)
                v, C, t = theta[0:3], theta[3:6], theta[6:9]
                if cfg.track_residuals:
                    trace.append(residual_at(v, C, w, t))
                w = _solve_system(sys_, "w", cfg, 3, v=v, C=C, t=t)
            elif variant is R6pVariant.VCT_WT:
                theta = _solve_system(sys_, "vCt", cfg, 9, w=w)
                v, C, t = theta[0:3], theta[3:6], theta[6:9]
                if cfg.track_residuals:
                    trace.append(residual_at(v, C, w, t))
                theta = _solve_system(sys_, "wt", cfg, 6, v=v, C=C)
                w, t = theta[0:3], theta[3:6]
            else:
                theta = _solve_system(sys_, "full", cfg, 12, vhat=vhat)
                v, C, w, t = theta[0:3], theta[3:6], theta[6:9], theta[9:12]
                vhat = v
        except DegenerateConfiguration:
            if k == 0:
                raise
            v, C, w, t = last
            converged = False
            break
        iterations = k + 1
        last = (v, C, w, t)
        new_params = _params_vector(v, C, w, t)
        if cfg.track_residuals:
            trace.append(residual_at(v, C, w, t))
            if trace[-1] < cfg.residual_tol:
                converged = True
                params = new_params
                break
        if params is not None and float(np.max(np.abs(new_params - params))) < cfg.param_tol:
            params = new_params
            converged = True
            break
        params = new_params

    model = RsCameraModel(v, C, w, t, cfg.r0)
    final_residual = trace[-1] if trace else algebraic_residual(model, corr_arrays)
    return RsPoseSolution(
        model=model,
        iterations_used=iterations,
        final_residual=float(final_residual),
        converged=converged,
        residual_trace=tuple(trace),
    )


# --- three-point perspective baseline -------------------------------------

def _grunert_distances(world: np.ndarray, bearings: np.ndarray):
    """Camera-to-point distances for the three-point pose problem.

    Classic side-length/ray-angle formulation: the two distance ratios are
    coupled through a quartic, assembled here with polynomial arithmetic from
    the two law-of-cosines constraints rather than transcribed coefficients.
    """
    p1, p2, p3 = world
    side_a = float(np.linalg.norm(p2 - p3))
    side_b = float(np.linalg.norm(p1 - p3))
    side_c = float(np.linalg.norm(p1 - p2))
    f1, f2, f3 = bearings
    cos_a = float(f2 @ f3)
    cos_b = float(f1 @ f3)
    cos_g = float(f1 @ f2)

    bb = side_b * side_b
    q = (side_a * side_a - side_c * side_c) / bb
    ratio_c = side_c * side_c / bb

    # u = N(v) / D(v); substitute into u^2 - 2 u cos_g + G(v) = 0
    n_poly = np.array([1.0 + q, -2.0 * q * cos_b, q - 1.0])
    d_poly = np.array([2.0 * cos_g, -2.0 * cos_a])
    g_poly = np.array([1.0 - ratio_c, 2.0 * ratio_c * cos_b, -ratio_c])
    quartic = npoly.polyadd(
        npoly.polysub(npoly.polymul(n_poly, n_poly),
                      2.0 * cos_g * npoly.polymul(n_poly, d_poly)),
        npoly.polymul(g_poly, npoly.polymul(d_poly, d_poly)),
    )

    roots = npoly.polyroots(quartic)
    deriv = npoly.polyder(quartic)
    solutions = []
    for root in roots:
        if abs(root.imag) > 1e-8 * (1.0 + abs(root.real)):
            continue
        val = float(root.real)
        for _ in range(3):  # Newton polish on the real axis
            fval = npoly.polyval(val, quartic)
            dval = npoly.polyval(val, deriv)
            if dval == 0.0:
                break
            val -= fval / dval
        if val <= 0.0:
            continue
        denom = 2.0 * (cos_g - val * cos_a)
        if abs(denom) < 1e-12:
            continue
        u = float(npoly.polyval(val, n_poly)) / denom
        if u <= 0.0:
            continue
        s1_sq = bb / (1.0 + val * val - 2.0 * val * cos_b)
        if s1_sq <= 0.0:
            continue
        s1 = math.sqrt(s1_sq)
        solutions.append((s1, u * s1, val * s1))
    return solutions


def _rigid_fit(world: np.ndarray, camera: np.ndarray):
    """Proper rotation and translation with camera = R @ world + C."""
    wc = world.mean(axis=0)
    cc = camera.mean(axis=0)
    h = (camera - cc).T @ (world - wc)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(u @ vt))
    r = u @ np.diag([1.0, 1.0, d]) @ vt
    return r, cc - r @ wc


def p3p(corrs) -> list[PoseCandidate]:
    """All perspective poses consistent with three 2D-3D correspondences."""
    world, image = stack_correspondences(corrs)
    if world.shape[0] != 3:
        raise TooFewPoints(f"p3p needs exactly 3 correspondences, got {world.shape[0]}")
    span = np.cross(world[1] - world[0], world[2] - world[0])
    scale = max(1.0, float(np.max(np.abs(world))))
    if np.linalg.norm(span) < 1e-10 * scale * scale:
        raise DegenerateConfiguration("world points are collinear")
    homog = np.concatenate([image, np.ones((3, 1))], axis=1)
    bearings = homog / np.linalg.norm(homog, axis=1, keepdims=True)
    candidates = []
    for distances in _grunert_distances(world, bearings):
        camera_pts = bearings * np.asarray(distances)[:, None]
        r, c = _rigid_fit(world, camera_pts)
        candidates.append(PoseCandidate(r, c))
    return candidates


def p3p_best(corrs, eval_corrs=None) -> PoseCandidate:
    """Best perspective pose over all 3-point subsets of a six-point sample,
    ranked by summed reprojection error on ``eval_corrs``."""
    world, image = stack_correspondences(corrs)
    n = world.shape[0]
    if n < 3:
        raise TooFewPoints(f"p3p_best needs at least 3 correspondences, got {n}")
    if eval_corrs is None:
        eval_arrays = (world, image)
    else:
        eval_arrays = stack_correspondences(eval_corrs)
    best = None
    best_score = np.inf
    for idx in itertools.combinations(range(n), 3):
        sel = list(idx)
        try:
            candidates = p3p((world[sel], image[sel]))
        except DegenerateConfiguration:
            continue
        for cand in candidates:
            errs = perspective_reprojection_errors(cand.R, cand.C, eval_arrays)
            score = float(np.sum(errs))
            if math.isfinite(score) and score < best_score:
                best = cand
                best_score = score
    if best is None:
        raise AllTripletsDegenerate("no 3-point subset produced a usable pose")
    return best


def prerotate(corrs, R) -> list[Correspondence]:
    """World points rotated by R so the solver linearizes near identity.

    The translation parameters are unchanged by this map; the estimated
    orientation in the original frame is ``(I + [v]x) @ R``, see
    :func:`compose_with_prerotation`.
    """
    R = require_rotation(R, name="prerotation")
    world, image = stack_correspondences(corrs)
    return geometry.make_correspondences(world @ R.T, image)


def compose_with_prerotation(v, R_pre) -> np.ndarray:
    """Orientation matrix in the original world frame after solving on
    pre-rotated points; generally not orthogonal since v is a linearization."""
    return (np.eye(3) + skew(v)) @ np.asarray(R_pre, dtype=float)


@dataclass(frozen=True)
class SolveOutcome:
    """Uniform wrapper over the three solution kinds, used by the CLI, the
    service and the benchmark."""

    solver_id: str
    solution: object
    prerotation: np.ndarray | None = None


def solve_with_solver_id(solver_id: str, corrs, cfg: SolverConfig = SolverConfig(),
                         *, prerotate_p3p: bool = False) -> SolveOutcome:
    """Dispatch on a solver id; optionally pre-rotate with the best P3P pose.

    R6P solvers consume the first 6 correspondences' worth of constraints
    (all points enter the least squares); the pre-rotation estimate uses the
    first 6 points and the minimal three-point solver never pre-rotates.
    """
    if solver_id not in SOLVER_IDS:
        raise ValueError(f"unknown solver id {solver_id!r}; expected one of {SOLVER_IDS}")
    world, image = stack_correspondences(corrs)
    arrays = (world, image)
    if solver_id == "p3p":
        eval_arrays = arrays
        sample = (world[:6], image[:6]) if world.shape[0] > 6 else arrays
        return SolveOutcome(solver_id, p3p_best(sample, eval_arrays))
    r_pre = None
    if prerotate_p3p:
        n = min(world.shape[0], 6)
        pose = p3p_best((world[:n], image[:n]), arrays)
        r_pre = pose.R
        arrays = (world @ r_pre.T, image)
    if solver_id == "r9p":
        return SolveOutcome(solver_id, r9p(arrays, cfg), r_pre)
    solution = r6p_iterative(R6pVariant.parse(solver_id), arrays, cfg)
    return SolveOutcome(solver_id, solution, r_pre)
