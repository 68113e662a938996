"""Rolling-shutter absolute camera pose from 2D-3D correspondences.

Linear six-point solvers that iterate over complementary parameter blocks,
a non-iterative nine-point solver with an unconstrained motion matrix, a
three-point perspective baseline, RANSAC on top of any of them, and a
synthetic benchmark harness.
"""

from .exceptions import (
    AllTripletsDegenerate,
    BehindCamera,
    CorrespondenceParseError,
    DegenerateConfiguration,
    GenerationExhausted,
    NoRowFixpoint,
    NoValidHypothesis,
    RsPoseError,
    TooFewPoints,
)
from .geometry import (
    Correspondence,
    ExactRsCamera,
    RsCameraModel,
    algebraic_residual,
    make_correspondences,
    project_exact_rs,
    project_linearized,
    project_points_exact_rs,
    project_points_linearized,
    project_points_perspective,
    reprojection_error,
    reprojection_errors,
    rotation_from_axis_angle,
)
from .ransac import RansacConfig, RansacResult, count_inliers, ransac
from .solvers import (
    PoseCandidate,
    R6pVariant,
    R9pSolution,
    RsPoseSolution,
    SOLVER_IDS,
    SolveOutcome,
    SolverConfig,
    compose_with_prerotation,
    p3p,
    p3p_best,
    prerotate,
    r6p_iterative,
    r9p,
    solve_with_solver_id,
)
from .synthbench import (
    EXPERIMENT_KINDS,
    MotionConfig,
    SceneConfig,
    SceneTruth,
    add_noise,
    generate_scene,
    pose_errors,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "AllTripletsDegenerate",
    "BehindCamera",
    "Correspondence",
    "CorrespondenceParseError",
    "DegenerateConfiguration",
    "EXPERIMENT_KINDS",
    "ExactRsCamera",
    "GenerationExhausted",
    "MotionConfig",
    "NoRowFixpoint",
    "NoValidHypothesis",
    "PoseCandidate",
    "R6pVariant",
    "R9pSolution",
    "RansacConfig",
    "RansacResult",
    "RsCameraModel",
    "RsPoseError",
    "RsPoseSolution",
    "SOLVER_IDS",
    "SceneConfig",
    "SceneTruth",
    "SolveOutcome",
    "SolverConfig",
    "TooFewPoints",
    "add_noise",
    "algebraic_residual",
    "compose_with_prerotation",
    "count_inliers",
    "generate_scene",
    "make_correspondences",
    "p3p",
    "p3p_best",
    "pose_errors",
    "prerotate",
    "project_exact_rs",
    "project_linearized",
    "project_points_exact_rs",
    "project_points_linearized",
    "project_points_perspective",
    "r6p_iterative",
    "r9p",
    "ransac",
    "reprojection_error",
    "reprojection_errors",
    "rotation_from_axis_angle",
    "run_experiment",
    "solve_with_solver_id",
    "__version__",
]
