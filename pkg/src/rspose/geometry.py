"""Camera models and projection geometry for rolling-shutter pose estimation.

Image points are stored as ``(r, c)`` with the row coordinate first: the row
doubles as the capture-time coordinate of a rolling-shutter camera, so the
homogeneous image vector is ``[r, c, 1]``.  All projection models share the
convention ``depth * [r, c, 1] = M(r) @ X + C + (r - r0) * t`` where ``M(r)``
depends on the model variant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import BehindCamera, NoRowFixpoint

# Synthetic frames are normalized (K = I).  A 45 degree field of view spans
# rows and columns in [-tan(22.5deg), +tan(22.5deg)].
DEFAULT_FOV_DEGREES = 45.0
FRAME_HALF_EXTENT = math.tan(math.radians(DEFAULT_FOV_DEGREES) / 2.0)
FRAME_EXTENT = 2.0 * FRAME_HALF_EXTENT
DEFAULT_ROWS_PER_FRAME = 720

# Implicit row equation defaults: the per-row pose change is small for
# realistic motions, so the fixed-point map is strongly contractive.
ROW_FIXPOINT_MAX_ITER = 50
ROW_FIXPOINT_TOL = 1e-12
ROW_FIXPOINT_DAMPING = 0.9

PROJECTION_OK = 0
PROJECTION_NO_FIXPOINT = 1
PROJECTION_BEHIND = 2

MODEL_VARIANTS = ("rotation", "linearized", "split")


def as_vec3(value, name: str = "vector") -> np.ndarray:
    v = np.asarray(value, dtype=float).reshape(-1)
    if v.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got shape {np.shape(value)}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v


def as_mat3(value, name: str = "matrix") -> np.ndarray:
    m = np.asarray(value, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"{name} must be 3x3, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} must be finite")
    return m


def require_rotation(m, tol: float = 1e-9, name: str = "rotation") -> np.ndarray:
    """Validate that ``m`` is a proper rotation (orthonormal, det +1)."""
    m = as_mat3(m, name)
    if np.max(np.abs(m @ m.T - np.eye(3))) > tol or abs(np.linalg.det(m) - 1.0) > tol:
        raise ValueError(f"{name} is not a proper rotation within {tol}")
    return m


def skew(a) -> np.ndarray:
    """Skew-symmetric matrix S with S @ b = a x b."""
    a = as_vec3(a, "skew argument")
    return np.array(
        [
            [0.0, -a[2], a[1]],
            [a[2], 0.0, -a[0]],
            [-a[1], a[0], 0.0],
        ]
    )


def skew_batch(vectors: np.ndarray) -> np.ndarray:
    """Stack of skew matrices, shape (n, 3, 3) from vectors (n, 3)."""
    v = np.asarray(vectors, dtype=float)
    n = v.shape[0]
    s = np.zeros((n, 3, 3))
    s[:, 0, 1] = -v[:, 2]
    s[:, 0, 2] = v[:, 1]
    s[:, 1, 0] = v[:, 2]
    s[:, 1, 2] = -v[:, 0]
    s[:, 2, 0] = -v[:, 1]
    s[:, 2, 1] = v[:, 0]
    return s


def rotation_from_axis_angle(aa) -> np.ndarray:
    """Rodrigues formula; rotation angle is ||aa||, axis aa/||aa||."""
    aa = as_vec3(aa, "axis-angle")
    angle = float(np.linalg.norm(aa))
    s = skew(aa)
    if angle < 1e-10:
        # second-order series keeps the zero-angle branch smooth
        return np.eye(3) + s + 0.5 * (s @ s)
    k = s / angle
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def rotation_angle_deg(r) -> float:
    """Rotation angle of a rotation matrix, in degrees."""
    r = as_mat3(r)
    c = (np.trace(r) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def polar_rotation(m) -> np.ndarray:
    """Closest rotation to ``m`` in Frobenius norm (polar factor)."""
    u, _, vt = np.linalg.svd(as_mat3(m))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


@dataclass(frozen=True)
class Correspondence:
    """One 2D-3D match; the image row is the capture-time coordinate."""

    world_point: np.ndarray
    image_point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "world_point", as_vec3(self.world_point, "world_point"))
        img = np.asarray(self.image_point, dtype=float).reshape(-1)
        if img.shape != (2,) or not np.all(np.isfinite(img)):
            raise ValueError("image_point must be 2 finite components (r, c)")
        object.__setattr__(self, "image_point", img)

    @property
    def row(self) -> float:
        return float(self.image_point[0])


def stack_correspondences(corrs) -> tuple[np.ndarray, np.ndarray]:
    """(world (n,3), image (n,2)) arrays from a correspondence sequence."""
    if isinstance(corrs, tuple) and len(corrs) == 2 and isinstance(corrs[0], np.ndarray):
        return corrs
    world = np.array([c.world_point for c in corrs], dtype=float).reshape(-1, 3)
    image = np.array([c.image_point for c in corrs], dtype=float).reshape(-1, 2)
    return world, image


def make_correspondences(world: np.ndarray, image: np.ndarray) -> list[Correspondence]:
    return [Correspondence(w, i) for w, i in zip(np.asarray(world), np.asarray(image))]


@dataclass(frozen=True)
class RsCameraModel:
    """Double-linearized rolling-shutter camera: orientation ``I + [v]x``,
    per-row rotation ``I + (r - r0)[w]x``, translation ``C + (r - r0) t``."""

    v: np.ndarray
    C: np.ndarray
    w: np.ndarray
    t: np.ndarray
    r0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "v", as_vec3(self.v, "v"))
        object.__setattr__(self, "C", as_vec3(self.C, "C"))
        object.__setattr__(self, "w", as_vec3(self.w, "w"))
        object.__setattr__(self, "t", as_vec3(self.t, "t"))
        if not math.isfinite(self.r0):
            raise ValueError("r0 must be finite")

    @staticmethod
    def zero(r0: float = 0.0) -> "RsCameraModel":
        z = np.zeros(3)
        return RsCameraModel(z, z, z, z, r0)


@dataclass(frozen=True)
class ExactRsCamera:
    """Ground-truth generator camera: exact rotation ``expm((r-r0)[w]x) @ R_v``
    and constant per-row translational velocity."""

    R_v: np.ndarray
    C: np.ndarray
    w_axis_angle: np.ndarray
    t: np.ndarray
    r0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "R_v", require_rotation(self.R_v, name="R_v"))
        object.__setattr__(self, "C", as_vec3(self.C, "C"))
        object.__setattr__(self, "w_axis_angle", as_vec3(self.w_axis_angle, "w_axis_angle"))
        object.__setattr__(self, "t", as_vec3(self.t, "t"))


@dataclass(frozen=True)
class ProjectionResult:
    image_point: np.ndarray
    depth: float


def _solve_row_fixpoint(camera_points_at, rows0, max_iter, tol, damping):
    """Damped fixed-point iteration on the per-point row equation.

    ``camera_points_at(rows)`` maps an (n,) row vector to (n, 3) camera-frame
    points.  Returns (rows, points, status) with per-point status codes.
    """
    rows = np.asarray(rows0, dtype=float).copy()
    n = rows.shape[0]
    status = np.full(n, PROJECTION_NO_FIXPOINT, dtype=np.int8)
    active = np.ones(n, dtype=bool)
    with np.errstate(all="ignore"):
        for _ in range(max_iter):
            pts = camera_points_at(rows)
            depth = pts[:, 2]
            target = pts[:, 0] / np.where(np.abs(depth) > 1e-300, depth, 1.0)
            diverged = active & (~np.isfinite(rows) | ~np.isfinite(target)
                                 | (np.abs(depth) <= 1e-300))
            active &= ~diverged
            step = target - rows
            done = active & (np.abs(step) < tol)
            status[done] = PROJECTION_OK
            active &= ~done
            if not active.any():
                break
            rows = np.where(active, rows + damping * step, rows)
        rows = np.where(np.isfinite(rows), rows, 0.0)
        pts = camera_points_at(rows)
    behind = (status == PROJECTION_OK) & (pts[:, 2] <= 0.0)
    status[behind] = PROJECTION_BEHIND
    return rows, pts, status


def project_points_rowlinear(base: np.ndarray, spin: np.ndarray, C, t, r0: float, *,
                             max_iter: int = ROW_FIXPOINT_MAX_ITER,
                             tol: float = ROW_FIXPOINT_TOL,
                             damping: float = ROW_FIXPOINT_DAMPING):
    """Projection core shared by every row-linear camera model.

    Solves the implicit row equation for ``depth [r,c,1] = base_i +
    (r - r0) * (spin_i + t) + C`` given per-point vectors ``base`` and
    ``spin`` of shape (n, 3).  Returns (image (n,2), depth (n,), status (n,)).
    """
    base = np.asarray(base, dtype=float).reshape(-1, 3)
    spin = np.asarray(spin, dtype=float).reshape(-1, 3)
    C = as_vec3(C, "C")
    t = as_vec3(t, "t")

    def points_at(rows):
        a = (rows - r0)[:, None]
        return base + a * spin + C + a * t

    p0 = points_at(np.full(base.shape[0], r0))
    with np.errstate(divide="ignore", invalid="ignore"):
        rows0 = np.where(np.abs(p0[:, 2]) > 1e-300, p0[:, 0] / p0[:, 2], r0)
    rows, pts, status = _solve_row_fixpoint(points_at, rows0, max_iter, tol, damping)
    with np.errstate(divide="ignore", invalid="ignore"):
        image = np.stack([rows, pts[:, 1] / pts[:, 2]], axis=1)
    return image, pts[:, 2], status


def _linearized_base_spin(model: RsCameraModel, world: np.ndarray, variant: str,
                          vhat=None, R_v=None):
    world = np.asarray(world, dtype=float).reshape(-1, 3)
    if variant == "rotation":
        if R_v is None:
            raise ValueError("variant 'rotation' needs the orientation matrix R_v")
        base = world @ np.asarray(R_v, dtype=float).T
    elif variant == "linearized":
        base = world + np.cross(np.broadcast_to(model.v, world.shape), world)
    elif variant == "split":
        if vhat is None:
            raise ValueError("variant 'split' needs the frozen vector vhat")
        base = world + np.cross(np.broadcast_to(model.v, world.shape), world)
    else:
        raise ValueError(f"unknown model variant {variant!r}; expected one of {MODEL_VARIANTS}")

    if variant == "split":
        spin_of = world + np.cross(np.broadcast_to(as_vec3(vhat, "vhat"), world.shape), world)
    else:
        spin_of = base

    spin = np.cross(np.broadcast_to(model.w, spin_of.shape), spin_of)
    return base, spin


def project_points_linearized(model: RsCameraModel, world: np.ndarray,
                              variant: str = "linearized", *, vhat=None, R_v=None,
                              max_iter: int = ROW_FIXPOINT_MAX_ITER,
                              tol: float = ROW_FIXPOINT_TOL,
                              damping: float = ROW_FIXPOINT_DAMPING):
    """Batch projection under a linearized model variant.

    Returns (image (n,2), depth (n,), status (n,)); rows solve the implicit
    equation "projected row equals the row used as capture time".
    """
    world = np.asarray(world, dtype=float).reshape(-1, 3)
    base, spin = _linearized_base_spin(model, world, variant, vhat=vhat, R_v=R_v)
    return project_points_rowlinear(base, spin, model.C, model.t, model.r0,
                                    max_iter=max_iter, tol=tol, damping=damping)


def project_linearized(model: RsCameraModel, X, variant: str = "linearized", *,
                       vhat=None, R_v=None,
                       max_iter: int = ROW_FIXPOINT_MAX_ITER,
                       tol: float = ROW_FIXPOINT_TOL,
                       damping: float = ROW_FIXPOINT_DAMPING) -> ProjectionResult:
    """Project one world point; raises on fixpoint failure or negative depth."""
    world = as_vec3(X, "X")[None, :]
    image, depth, status = project_points_linearized(
        model, world, variant, vhat=vhat, R_v=R_v,
        max_iter=max_iter, tol=tol, damping=damping)
    if status[0] == PROJECTION_NO_FIXPOINT:
        raise NoRowFixpoint(f"row fixpoint did not converge in {max_iter} iterations")
    if status[0] == PROJECTION_BEHIND:
        raise BehindCamera(f"depth {depth[0]:.6g} <= 0")
    return ProjectionResult(image[0].copy(), float(depth[0]))


def project_points_exact_rs(cam: ExactRsCamera, world: np.ndarray, *,
                            max_iter: int = ROW_FIXPOINT_MAX_ITER,
                            tol: float = ROW_FIXPOINT_TOL,
                            damping: float = ROW_FIXPOINT_DAMPING):
    """Batch projection with the exact constant-velocity generator."""
    world = np.asarray(world, dtype=float).reshape(-1, 3)
    base = world @ cam.R_v.T
    omega = cam.w_axis_angle
    angle_rate = float(np.linalg.norm(omega))
    axis = omega / angle_rate if angle_rate > 0 else np.zeros(3)
    t = cam.t
    C = cam.C
    r0 = cam.r0

    def points_at(rows):
        a = rows - r0
        if angle_rate == 0.0:
            rotated = base
        else:
            theta = (a * angle_rate)[:, None]
            kxb = np.cross(np.broadcast_to(axis, base.shape), base)
            kdb = (base @ axis)[:, None]
            rotated = (base * np.cos(theta) + kxb * np.sin(theta)
                       + axis[None, :] * kdb * (1.0 - np.cos(theta)))
        return rotated + C + a[:, None] * t

    p0 = points_at(np.full(world.shape[0], r0))
    with np.errstate(divide="ignore", invalid="ignore"):
        rows0 = np.where(np.abs(p0[:, 2]) > 1e-300, p0[:, 0] / p0[:, 2], r0)
    rows, pts, status = _solve_row_fixpoint(points_at, rows0, max_iter, tol, damping)
    with np.errstate(divide="ignore", invalid="ignore"):
        image = np.stack([rows, pts[:, 1] / pts[:, 2]], axis=1)
    return image, pts[:, 2], status


def project_exact_rs(cam: ExactRsCamera, X, *,
                     max_iter: int = ROW_FIXPOINT_MAX_ITER,
                     tol: float = ROW_FIXPOINT_TOL,
                     damping: float = ROW_FIXPOINT_DAMPING) -> ProjectionResult:
    world = as_vec3(X, "X")[None, :]
    image, depth, status = project_points_exact_rs(
        cam, world, max_iter=max_iter, tol=tol, damping=damping)
    if status[0] == PROJECTION_NO_FIXPOINT:
        raise NoRowFixpoint(f"row fixpoint did not converge in {max_iter} iterations")
    if status[0] == PROJECTION_BEHIND:
        raise BehindCamera(f"depth {depth[0]:.6g} <= 0")
    return ProjectionResult(image[0].copy(), float(depth[0]))


def project_points_perspective(R: np.ndarray, C: np.ndarray, world: np.ndarray):
    """Global-shutter projection ``depth [r,c,1] = R X + C`` (batch)."""
    world = np.asarray(world, dtype=float).reshape(-1, 3)
    p = world @ np.asarray(R, dtype=float).T + np.asarray(C, dtype=float)
    depth = p[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        image = p[:, :2] / depth[:, None]
    status = np.where(depth > 0, PROJECTION_OK, PROJECTION_BEHIND).astype(np.int8)
    return image, depth, status


def keep_row_indices(image: np.ndarray) -> np.ndarray:
    """Indices (n, 2) of the two largest-norm rows of skew([r, c, 1]).

    The skew matrix has rank 2; dropping the smallest-norm row keeps the
    best-conditioned pair regardless of where the point sits in the frame.
    """
    image = np.asarray(image, dtype=float).reshape(-1, 2)
    r = image[:, 0]
    c = image[:, 1]
    norms = np.stack([1.0 + c * c, 1.0 + r * r, r * r + c * c], axis=1)
    return np.argsort(norms, axis=1, kind="stable")[:, 1:]


def constraint_rows_model(model: RsCameraModel, world: np.ndarray, image: np.ndarray,
                          variant: str = "linearized", vhat=None) -> np.ndarray:
    """Depth-eliminated model constraints, two kept rows per correspondence.

    Left-multiplying the projection equation by skew([r, c, 1]) cancels the
    depth; at a model-consistent point every row is zero.
    """
    world = np.asarray(world, dtype=float).reshape(-1, 3)
    image = np.asarray(image, dtype=float).reshape(-1, 2)
    base, spin = _linearized_base_spin(model, world, variant, vhat=vhat)
    a = (image[:, 0] - model.r0)[:, None]
    p = base + a * spin + model.C + a * model.t
    x = np.concatenate([image, np.ones((image.shape[0], 1))], axis=1)
    full = np.cross(x, p)
    keep = keep_row_indices(image)
    return np.take_along_axis(full, keep, axis=1).reshape(-1)


def algebraic_residual(model: RsCameraModel, corrs) -> float:
    """RMS of the depth-eliminated double-linearized constraints."""
    world, image = stack_correspondences(corrs)
    if world.shape[0] == 0:
        raise ValueError("algebraic_residual needs at least one correspondence")
    rows = constraint_rows_model(model, world, image, "linearized")
    return float(np.sqrt(np.mean(rows * rows)))


def reprojection_errors(model: RsCameraModel, corrs, *, R_pre=None) -> np.ndarray:
    """Per-point image distances under the double-linearized model (batch).

    Projection failures map to +inf so the point can never be an inlier.
    With ``R_pre`` the model is interpreted in a pre-rotated world frame:
    points are projected through ``(I + [v]x) @ R_pre``.
    """
    world, image = stack_correspondences(corrs)
    if R_pre is None:
        proj, _, status = project_points_linearized(model, world, "linearized")
    else:
        m = (np.eye(3) + skew(model.v)) @ np.asarray(R_pre, dtype=float)
        proj, _, status = project_points_linearized(model, world, "rotation", R_v=m)
    err = np.linalg.norm(proj - image, axis=1)
    err[status != PROJECTION_OK] = np.inf
    return err


def reprojection_error(model: RsCameraModel, corr: Correspondence) -> float:
    """Image distance between the observation and the model's projection."""
    return float(reprojection_errors(model, [corr])[0])


def perspective_reprojection_errors(R, C, corrs) -> np.ndarray:
    """Per-point image distances under a global-shutter pose (batch)."""
    world, image = stack_correspondences(corrs)
    proj, _, status = project_points_perspective(R, C, world)
    err = np.linalg.norm(proj - image, axis=1)
    err[status != PROJECTION_OK] = np.inf
    return err
