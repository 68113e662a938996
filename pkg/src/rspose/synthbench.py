"""Synthetic scene generator, pose-error metrics, and sweep experiments.

The generator reproduces the desk-scale protocol the solvers are designed
for: points uniform in a cube of half-extent 1 around the origin, a camera
2-3 units away looking at the origin through a 45 degree field of view, and
rolling-shutter projections rendered with an exact constant-velocity camera
(true per-row rotation, not the solvers' linearization).  Velocities are
specified per frame and converted to per-row units internally.

Experiments emit flat CSV records (one row per sweep point, trial and
solver) with per-(sweep, solver) medians appended as ``trial=-1`` rows.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, fields as dataclass_fields

import numpy as np

from .exceptions import (
    AllTripletsDegenerate,
    DegenerateConfiguration,
    GenerationExhausted,
    NoValidHypothesis,
    TooFewPoints,
)
from . import geometry
from .geometry import (
    DEFAULT_FOV_DEGREES,
    DEFAULT_ROWS_PER_FRAME,
    ExactRsCamera,
    PROJECTION_OK,
    RsCameraModel,
    algebraic_residual,
    perspective_reprojection_errors,
    polar_rotation,
    project_points_exact_rs,
    rotation_angle_deg,
    skew,
)
from .ransac import RansacConfig, model_reprojection_errors, ransac
from .solvers import (
    PoseCandidate,
    R9pSolution,
    RsPoseSolution,
    SOLVER_IDS,
    SolverConfig,
    solve_with_solver_id,
)

EXPERIMENT_KINDS = (
    "motion-sweep",
    "noise-sweep",
    "translation-only",
    "convergence",
    "linearization-offset",
    "p3p-init",
    "ransac-outliers",
)

ORIENTATION_MODES = ("identity", "offset", "random")

# sweep ceilings: scene units per frame translation, degrees per frame rotation
MAX_TRANSLATION_PER_FRAME = 0.3
MAX_ROTATION_DEG_PER_FRAME = 30.0


@dataclass(frozen=True)
class SceneConfig:
    """Static scene parameters; orientation controls cover the experiments
    that move the camera rotation away from identity."""

    num_points: int = 6
    cube_half_extent: float = 1.0
    camera_distance_range: tuple[float, float] = (2.0, 3.0)
    fov_degrees: float = DEFAULT_FOV_DEGREES
    rows_per_frame: int = DEFAULT_ROWS_PER_FRAME
    seed: int = 0
    orientation_mode: str = "identity"
    orientation_offset_deg: float = 0.0

    def __post_init__(self):
        lo, hi = self.camera_distance_range
        if not (0 < lo <= hi):
            raise ValueError("camera_distance_range must be positive and ordered")
        if not (0.0 < self.fov_degrees < 180.0):
            raise ValueError("fov_degrees must be in (0, 180)")
        if self.num_points < 1:
            raise ValueError("num_points must be >= 1")
        if self.orientation_mode not in ORIENTATION_MODES:
            raise ValueError(f"orientation_mode must be one of {ORIENTATION_MODES}")

    @property
    def frame_half_extent(self) -> float:
        return math.tan(math.radians(self.fov_degrees) / 2.0)


@dataclass(frozen=True)
class MotionConfig:
    """Per-frame motion magnitudes; directions are drawn from the scene rng."""

    translational_per_frame: float = 0.0
    angular_deg_per_frame: float = 0.0

    def __post_init__(self):
        if self.translational_per_frame < 0 or self.angular_deg_per_frame < 0:
            raise ValueError("motion magnitudes must be >= 0")


@dataclass(frozen=True)
class SceneTruth:
    """Ground truth for one synthetic scene: exact camera and noiseless
    in-frame projections with positive depths."""

    camera: ExactRsCamera
    world: np.ndarray
    image: np.ndarray
    depths: np.ndarray
    frame_half_extent: float
    rows_per_frame: int

    @property
    def pixel_size(self) -> float:
        """Image units per pixel (frame extent divided by rows per frame)."""
        return 2.0 * self.frame_half_extent / self.rows_per_frame

    @property
    def per_frame_scale(self) -> float:
        """Row units per frame: multiplies per-row velocities to per-frame."""
        return 2.0 * self.frame_half_extent

    def correspondences(self):
        return self.world, self.image


@dataclass(frozen=True)
class PoseErrors:
    position: float
    orientation_deg: float
    w_error: float
    t_error: float


@dataclass(frozen=True)
class ExperimentRecord:
    """One CSV row.  ``failed`` flags solver errors (the sweep never aborts);
    ``inlier_count`` is -1 outside RANSAC experiments.  Median summary rows
    use trial=-1 and aggregate over the non-failed trials."""

    sweep_value: float
    solver_id: str
    trial: int
    position_error: float
    orientation_error: float
    w_error: float
    t_error: float
    algebraic_residual: float
    iterations: float
    wall_time: float
    failed: int
    inlier_count: int


CSV_COLUMNS = tuple(f.name for f in dataclass_fields(ExperimentRecord))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation via a normalized Gaussian quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _unit_vector(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def _orientation(cfg: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.orientation_mode == "identity":
        return np.eye(3)
    if cfg.orientation_mode == "offset":
        axis = _unit_vector(rng)
        return geometry.rotation_from_axis_angle(
            axis * math.radians(cfg.orientation_offset_deg))
    return random_rotation(rng)


def generate_scene(scene_cfg: SceneConfig, motion_cfg: MotionConfig,
                   rng: np.random.Generator, *, max_batches: int = 64) -> SceneTruth:
    """Draw a camera and exactly ``num_points`` in-frame correspondences.

    Points falling outside the frame (or behind the camera, or without a
    consistent capture row) are redrawn; the retry budget is bounded so a
    hopeless configuration raises instead of spinning.
    """
    half = scene_cfg.frame_half_extent
    distance = rng.uniform(*scene_cfg.camera_distance_range)
    r_v = _orientation(scene_cfg, rng)
    # the optical axis passes through the origin for any orientation when the
    # translation is [0, 0, d]; the camera center sits at -R_v.T @ [0,0,d]
    c = np.array([0.0, 0.0, distance])
    per_frame = 2.0 * half
    w_row = (math.radians(motion_cfg.angular_deg_per_frame) / per_frame) * _unit_vector(rng)
    t_row = (motion_cfg.translational_per_frame / per_frame) * _unit_vector(rng)
    if motion_cfg.angular_deg_per_frame == 0.0:
        w_row = np.zeros(3)
    if motion_cfg.translational_per_frame == 0.0:
        t_row = np.zeros(3)
    camera = ExactRsCamera(r_v, c, w_row, t_row, r0=0.0)

    target = scene_cfg.num_points
    batch = max(target, 32)
    world_parts, image_parts, depth_parts = [], [], []
    total = 0
    for _ in range(max_batches):
        pts = rng.uniform(-scene_cfg.cube_half_extent, scene_cfg.cube_half_extent,
                          size=(batch, 3))
        image, depth, status = project_points_exact_rs(camera, pts)
        ok = ((status == PROJECTION_OK)
              & (np.abs(image[:, 0]) <= half) & (np.abs(image[:, 1]) <= half))
        world_parts.append(pts[ok])
        image_parts.append(image[ok])
        depth_parts.append(depth[ok])
        total += int(np.count_nonzero(ok))
        if total >= target:
            break
    else:
        raise GenerationExhausted(
            f"could not place {target} in-frame points in {max_batches} batches")
    world = np.concatenate(world_parts)[:target]
    image = np.concatenate(image_parts)[:target]
    depths = np.concatenate(depth_parts)[:target]
    return SceneTruth(camera, world, image, depths, half, scene_cfg.rows_per_frame)


def add_noise(truth: SceneTruth, sigma_pixels: float, rng: np.random.Generator) -> np.ndarray:
    """Noisy copy of the image points; sigma is in pixels, applied in image
    units via the scene's pixel size.  sigma=0 returns the points untouched."""
    if sigma_pixels < 0:
        raise ValueError("sigma_pixels must be >= 0")
    if sigma_pixels == 0.0:
        return truth.image.copy()
    return truth.image + rng.normal(scale=sigma_pixels * truth.pixel_size,
                                    size=truth.image.shape)


def pose_errors(est, truth: SceneTruth, *, R_pre=None) -> PoseErrors:
    """Position/orientation/velocity errors of an estimate vs ground truth.

    The linearized orientation is orthonormalized (polar factor) and composed
    with any pre-rotation before comparison.  Velocity errors are norms of
    per-frame differences; solvers that do not estimate a velocity get NaN.
    """
    w_est = None
    t_est = None
    if isinstance(est, RsPoseSolution):
        est = est.model
    if isinstance(est, PoseCandidate):
        r_est = est.R if R_pre is None else est.R @ np.asarray(R_pre, dtype=float)
        c_est = est.C
    elif isinstance(est, RsCameraModel):
        r_lin = np.eye(3) + skew(est.v)
        if R_pre is not None:
            r_lin = r_lin @ np.asarray(R_pre, dtype=float)
        r_est = polar_rotation(r_lin)
        c_est = est.C
        w_est = est.w
        t_est = est.t
    elif isinstance(est, R9pSolution):
        r_lin = np.eye(3) + skew(est.v)
        if R_pre is not None:
            r_lin = r_lin @ np.asarray(R_pre, dtype=float)
        r_est = polar_rotation(r_lin)
        c_est = est.C
        t_est = est.t
    else:
        raise TypeError(f"cannot compute pose errors for {type(est).__name__}")

    position = float(np.linalg.norm(c_est - truth.camera.C))
    orientation = rotation_angle_deg(r_est @ truth.camera.R_v.T)
    scale = truth.per_frame_scale
    w_err = float("nan")
    t_err = float("nan")
    if w_est is not None:
        w_err = math.degrees(float(np.linalg.norm(w_est - truth.camera.w_axis_angle)) * scale)
    if t_est is not None:
        t_err = float(np.linalg.norm(t_est - truth.camera.t)) * scale
    return PoseErrors(position, orientation, w_err, t_err)


def _fmt_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_records_csv(records, out) -> None:
    """Write records with locale-independent repr formatting; byte-stable."""
    lines = [",".join(CSV_COLUMNS)]
    for rec in records:
        lines.append(",".join(_fmt_cell(getattr(rec, col)) for col in CSV_COLUMNS))
    text = "\n".join(lines) + "\n"
    if hasattr(out, "write"):
        out.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _failure_record(sweep_value, solver_id, trial) -> ExperimentRecord:
    nan = float("nan")
    return ExperimentRecord(sweep_value, solver_id, trial, nan, nan, nan, nan,
                            nan, 0.0, 0.0, 1, -1)


_SOLVER_ERRORS = (DegenerateConfiguration, TooFewPoints, AllTripletsDegenerate,
                  NoValidHypothesis)


def _solver_points(solver_id: str) -> int:
    return 9 if solver_id == "r9p" else 6


def _solve_record(solver_id, truth, noisy_image, sweep_value, trial, cfg,
                  use_prerotation, timing) -> ExperimentRecord:
    k = min(_solver_points(solver_id), truth.world.shape[0])
    world = truth.world[:k]
    image = noisy_image[:k]
    started = time.perf_counter() if timing else 0.0
    try:
        outcome = solve_with_solver_id(solver_id, (world, image), cfg,
                                       prerotate_p3p=use_prerotation)
    except _SOLVER_ERRORS:
        return _failure_record(sweep_value, solver_id, trial)
    wall = time.perf_counter() - started if timing else 0.0

    sol = outcome.solution
    errors = pose_errors(sol, truth, R_pre=outcome.prerotation)
    if isinstance(sol, RsPoseSolution):
        residual = sol.final_residual
        iterations = float(sol.iterations_used)
    elif isinstance(sol, R9pSolution):
        residual = sol.residual
        iterations = 1.0
    else:
        finite = perspective_reprojection_errors(sol.R, sol.C, (world, image))
        residual = float(np.mean(finite[np.isfinite(finite)])) if np.any(np.isfinite(finite)) else float("inf")
        iterations = 1.0
    return ExperimentRecord(sweep_value, solver_id, trial, errors.position,
                            errors.orientation_deg, errors.w_error, errors.t_error,
                            float(residual), iterations, wall, 0, -1)


def _trial_rng(seed, sweep_idx, trial) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, sweep_idx, trial)))


def _derived_seed(seed, sweep_idx, trial) -> int:
    return int(np.random.SeedSequence((seed, sweep_idx, trial, 1)).generate_state(1)[0])


def _median_rows(records, trials) -> list[ExperimentRecord]:
    keys = []
    for rec in records:
        key = (rec.sweep_value, rec.solver_id)
        if key not in keys:
            keys.append(key)
    rows = []
    for sweep_value, solver_id in keys:
        group = [r for r in records if (r.sweep_value, r.solver_id) == (sweep_value, solver_id)]
        good = [r for r in group if not r.failed]
        failed = len(group) - len(good)

        def med(name):
            if not good:
                return float("nan")
            return float(np.median([getattr(r, name) for r in good]))

        counts = [r.inlier_count for r in good if r.inlier_count >= 0]
        med_count = int(np.median(counts)) if counts else -1
        rows.append(ExperimentRecord(
            sweep_value, solver_id, -1, med("position_error"), med("orientation_error"),
            med("w_error"), med("t_error"), med("algebraic_residual"),
            med("iterations"), med("wall_time"), failed, med_count))
    return rows


def _iteration_residuals(solution: RsPoseSolution, two_block: bool) -> list[float]:
    trace = list(solution.residual_trace)
    return trace[1::2] if two_block else trace


def run_experiment(kind: str, trials: int = 500, solvers=None, out=None, seed: int = 0,
                   *, timing: bool = False, max_iterations: int = 5,
                   noise_sigma_px: float = 1.0, num_points: int | None = None,
                   rows_per_frame: int = DEFAULT_ROWS_PER_FRAME,
                   ransac_iterations: int = 1000,
                   threshold_px: float = 2.0) -> list[ExperimentRecord]:
    """Run one named sweep and return (and optionally write) its records.

    Solver failures are recorded with failed=1, never aborting the sweep.
    With ``timing=False`` (the default) the wall_time column is written as 0
    so identical seeds give byte-identical CSV output.
    """
    if kind not in EXPERIMENT_KINDS:
        raise ValueError(f"unknown experiment kind {kind!r}; expected one of {EXPERIMENT_KINDS}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if solvers is None:
        solvers = _default_solvers(kind)
    for solver_id in solvers:
        if solver_id not in SOLVER_IDS:
            raise ValueError(f"unknown solver id {solver_id!r}")

    records = _run_kind(kind, trials, tuple(solvers), seed, timing, max_iterations,
                        noise_sigma_px, num_points, rows_per_frame,
                        ransac_iterations, threshold_px)
    records = records + _median_rows(records, trials)
    if out is not None:
        write_records_csv(records, out)
    return records


def _default_solvers(kind: str):
    if kind == "convergence":
        return ("r6p-vc-wt", "r6p-vct-w", "r6p-vct-wt", "r6p-vfix")
    if kind == "ransac-outliers":
        return ("p3p", "r6p-vfix")
    return SOLVER_IDS


def _run_kind(kind, trials, solvers, seed, timing, max_iterations, noise_sigma_px,
              num_points, rows_per_frame, ransac_iterations, threshold_px):
    base_points = num_points or (9 if "r9p" in solvers else 6)
    cfg = SolverConfig(max_iterations=max_iterations, track_residuals=False)
    records: list[ExperimentRecord] = []

    def scenes(sweep_idx, scene_cfg, motion_cfg, sigma):
        for trial in range(trials):
            rng = _trial_rng(seed, sweep_idx, trial)
            try:
                truth = generate_scene(scene_cfg, motion_cfg, rng)
            except GenerationExhausted:
                yield trial, None, None, rng
                continue
            yield trial, truth, add_noise(truth, sigma, rng), rng

    if kind in ("motion-sweep", "p3p-init"):
        fractions = np.linspace(0.0, 1.0, 7)
        random_orientation = kind == "p3p-init"
        for sweep_idx, frac in enumerate(fractions):
            sweep_value = float(frac * MAX_TRANSLATION_PER_FRAME)
            scene_cfg = SceneConfig(
                num_points=base_points, rows_per_frame=rows_per_frame, seed=seed,
                orientation_mode="random" if random_orientation else "identity")
            motion_cfg = MotionConfig(frac * MAX_TRANSLATION_PER_FRAME,
                                      frac * MAX_ROTATION_DEG_PER_FRAME)
            for trial, truth, noisy, _ in scenes(sweep_idx, scene_cfg, motion_cfg, noise_sigma_px):
                for solver_id in solvers:
                    if truth is None:
                        records.append(_failure_record(sweep_value, solver_id, trial))
                        continue
                    prerotate = random_orientation and solver_id != "p3p"
                    records.append(_solve_record(solver_id, truth, noisy, sweep_value,
                                                 trial, cfg, prerotate, timing))
        return records

    if kind == "noise-sweep":
        for sweep_idx, sigma in enumerate((0.0, 0.5, 1.0, 1.5, 2.0)):
            scene_cfg = SceneConfig(num_points=base_points, rows_per_frame=rows_per_frame, seed=seed)
            motion_cfg = MotionConfig(0.5 * MAX_TRANSLATION_PER_FRAME,
                                      0.5 * MAX_ROTATION_DEG_PER_FRAME)
            for trial, truth, noisy, _ in scenes(sweep_idx, scene_cfg, motion_cfg, sigma):
                for solver_id in solvers:
                    if truth is None:
                        records.append(_failure_record(sigma, solver_id, trial))
                        continue
                    records.append(_solve_record(solver_id, truth, noisy, float(sigma),
                                                 trial, cfg, False, timing))
        return records

    if kind == "translation-only":
        fractions = np.linspace(0.0, 1.0, 7)
        for sweep_idx, frac in enumerate(fractions):
            sweep_value = float(frac * MAX_TRANSLATION_PER_FRAME)
            scene_cfg = SceneConfig(num_points=base_points, rows_per_frame=rows_per_frame, seed=seed)
            motion_cfg = MotionConfig(sweep_value, 0.0)
            for trial, truth, noisy, _ in scenes(sweep_idx, scene_cfg, motion_cfg, noise_sigma_px):
                for solver_id in solvers:
                    if truth is None:
                        records.append(_failure_record(sweep_value, solver_id, trial))
                        continue
                    records.append(_solve_record(solver_id, truth, noisy, sweep_value,
                                                 trial, cfg, False, timing))
        return records

    if kind == "linearization-offset":
        for sweep_idx, offset in enumerate((0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)):
            scene_cfg = SceneConfig(
                num_points=base_points, rows_per_frame=rows_per_frame, seed=seed,
                orientation_mode="offset", orientation_offset_deg=offset)
            motion_cfg = MotionConfig(0.5 * MAX_TRANSLATION_PER_FRAME,
                                      0.5 * MAX_ROTATION_DEG_PER_FRAME)
            for trial, truth, noisy, _ in scenes(sweep_idx, scene_cfg, motion_cfg, noise_sigma_px):
                for solver_id in solvers:
                    if truth is None:
                        records.append(_failure_record(offset, solver_id, trial))
                        continue
                    records.append(_solve_record(solver_id, truth, noisy, offset,
                                                 trial, cfg, False, timing))
        return records

    if kind == "convergence":
        # per-iteration residual curves: sweep_value is the iteration index
        run_cfg = SolverConfig(max_iterations=50, param_tol=1e-15, residual_tol=0.0,
                               track_residuals=True)
        scene_cfg = SceneConfig(num_points=base_points, rows_per_frame=rows_per_frame,
                                seed=seed, orientation_mode="random")
        motion_cfg = MotionConfig(0.5 * MAX_TRANSLATION_PER_FRAME,
                                  0.5 * MAX_ROTATION_DEG_PER_FRAME)
        for trial, truth, noisy, _ in scenes(0, scene_cfg, motion_cfg, noise_sigma_px):
            for solver_id in solvers:
                if solver_id in ("p3p", "r9p"):
                    continue
                if truth is None:
                    records.append(_failure_record(0.0, solver_id, trial))
                    continue
                world = truth.world[:6]
                image = noisy[:6]
                try:
                    outcome = solve_with_solver_id(solver_id, (world, image), run_cfg,
                                                   prerotate_p3p=True)
                except _SOLVER_ERRORS:
                    records.append(_failure_record(0.0, solver_id, trial))
                    continue
                sol = outcome.solution
                per_iter = _iteration_residuals(sol, solver_id != "r6p-vfix")
                errors = pose_errors(sol, truth, R_pre=outcome.prerotation)
                for it, resid in enumerate(per_iter, start=1):
                    records.append(ExperimentRecord(
                        float(it), solver_id, trial, errors.position,
                        errors.orientation_deg, errors.w_error, errors.t_error,
                        float(resid), float(it), 0.0, 0, -1))
        return records

    # ransac-outliers
    for sweep_idx, outlier_frac in enumerate((0.1, 0.2, 0.3, 0.4, 0.5)):
        scene_cfg = SceneConfig(num_points=num_points or 100,
                                rows_per_frame=rows_per_frame, seed=seed)
        motion_cfg = MotionConfig(0.5 * MAX_TRANSLATION_PER_FRAME,
                                  0.5 * MAX_ROTATION_DEG_PER_FRAME)
        for trial, truth, noisy, rng in scenes(sweep_idx, scene_cfg, motion_cfg, noise_sigma_px):
            if truth is not None:
                corrupted, _ = spike_outliers(noisy, outlier_frac, truth.frame_half_extent, rng)
            for solver_id in solvers:
                if truth is None:
                    records.append(_failure_record(outlier_frac, solver_id, trial))
                    continue
                r_cfg = RansacConfig(
                    iterations=ransac_iterations, threshold=threshold_px,
                    seed=_derived_seed(seed, sweep_idx, trial),
                    units_per_pixel=truth.pixel_size,
                    solver_config=SolverConfig(max_iterations=max_iterations,
                                               track_residuals=False))
                started = time.perf_counter() if timing else 0.0
                try:
                    result = ransac((truth.world, corrupted), solver_id, r_cfg)
                except (TooFewPoints, NoValidHypothesis):
                    records.append(_failure_record(outlier_frac, solver_id, trial))
                    continue
                wall = time.perf_counter() - started if timing else 0.0
                errors = pose_errors(result.best_model, truth)
                inlier_err = result.errors[result.inlier_mask]
                mean_inlier_px = float(np.mean(inlier_err)) if result.inlier_count else float("nan")
                records.append(ExperimentRecord(
                    outlier_frac, solver_id, trial, errors.position,
                    errors.orientation_deg, errors.w_error, errors.t_error,
                    mean_inlier_px, float(max_iterations), wall, 0,
                    result.inlier_count))
    return records


def spike_outliers(image: np.ndarray, fraction: float, frame_half_extent: float,
                   rng: np.random.Generator):
    """Replace a random subset of points with uniform in-frame positions;
    returns (corrupted copy, boolean outlier mask)."""
    n = image.shape[0]
    k = int(round(fraction * n))
    out = image.copy()
    mask = np.zeros(n, dtype=bool)
    if k:
        idx = rng.choice(n, size=k, replace=False)
        out[idx] = rng.uniform(-frame_half_extent, frame_half_extent, size=(k, 2))
        mask[idx] = True
    return out, mask
