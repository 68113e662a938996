"""Synthetic scene generation, error metrics, and the experiment sweeps."""

import io
import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from rspose.geometry import (
    ExactRsCamera,
    FRAME_HALF_EXTENT,
    RsCameraModel,
    polar_rotation,
    project_points_perspective,
    rotation_angle_deg,
    rotation_from_axis_angle,
    skew,
)
from rspose.solvers import PoseCandidate, p3p_best, r6p_iterative, SolverConfig
from rspose.synthbench import (
    CSV_COLUMNS,
    EXPERIMENT_KINDS,
    MotionConfig,
    SceneConfig,
    SceneTruth,
    add_noise,
    generate_scene,
    pose_errors,
    random_rotation,
    run_experiment,
    write_records_csv,
)


@pytest.fixture
def still_truth(rng):
    return generate_scene(SceneConfig(num_points=12), MotionConfig(), rng)


class TestSceneGeneration:
    def test_point_count_and_frame_bounds(self, rng):
        truth = generate_scene(SceneConfig(num_points=40), MotionConfig(0.2, 20.0), rng)
        assert truth.world.shape == (40, 3)
        assert truth.image.shape == (40, 2)
        half = truth.frame_half_extent
        assert np.all(np.abs(truth.image) <= half)
        assert np.all(truth.depths > 0)
        assert np.all(np.abs(truth.world) <= 1.0)

    def test_camera_translation_and_distance(self, rng):
        truth = generate_scene(SceneConfig(num_points=6), MotionConfig(), rng)
        c = truth.camera.C
        assert c[0] == 0.0 and c[1] == 0.0
        assert 2.0 <= c[2] <= 3.0

    def test_identity_orientation_default(self, rng):
        truth = generate_scene(SceneConfig(num_points=6), MotionConfig(), rng)
        np.testing.assert_array_equal(truth.camera.R_v, np.eye(3))

    def test_orientation_offset_angle(self, rng):
        cfg = SceneConfig(num_points=6, orientation_mode="offset",
                          orientation_offset_deg=10.0)
        truth = generate_scene(cfg, MotionConfig(), rng)
        assert rotation_angle_deg(truth.camera.R_v) == pytest.approx(10.0, abs=1e-9)

    def test_random_orientation_is_rotation(self, rng):
        cfg = SceneConfig(num_points=6, orientation_mode="random")
        truth = generate_scene(cfg, MotionConfig(), rng)
        r = truth.camera.R_v
        np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(r) == pytest.approx(1.0)

    def test_motion_magnitudes_are_per_frame(self, rng):
        truth = generate_scene(SceneConfig(num_points=6), MotionConfig(0.21, 24.0), rng)
        scale = truth.per_frame_scale
        assert np.linalg.norm(truth.camera.w_axis_angle) * scale == pytest.approx(
            math.radians(24.0)
        )
        assert np.linalg.norm(truth.camera.t) * scale == pytest.approx(0.21)

    def test_zero_motion_flags_exact_zero(self, rng):
        truth = generate_scene(SceneConfig(num_points=6), MotionConfig(), rng)
        np.testing.assert_array_equal(truth.camera.w_axis_angle, np.zeros(3))
        np.testing.assert_array_equal(truth.camera.t, np.zeros(3))

    def test_pixel_size(self, rng):
        truth = generate_scene(SceneConfig(num_points=6, rows_per_frame=720),
                               MotionConfig(), rng)
        assert truth.pixel_size == pytest.approx(2 * FRAME_HALF_EXTENT / 720)

    def test_fast_motion_separates_from_still_projection(self, rng):
        """At the maximum rotation rate the rolling-shutter image must differ
        from the frozen-camera projection by more than a pixel, otherwise the
        sweeps compare solvers on effectively global-shutter data."""
        truth = generate_scene(SceneConfig(num_points=30), MotionConfig(0.0, 30.0), rng)
        frozen, _, _ = project_points_perspective(
            truth.camera.R_v, truth.camera.C, truth.world
        )
        shift_px = np.linalg.norm(truth.image - frozen, axis=1) / truth.pixel_size
        assert shift_px.max() > 1.0

    def test_random_rotation_uniformity_basics(self, rng):
        rs = [random_rotation(rng) for _ in range(50)]
        for r in rs:
            np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
            assert np.linalg.det(r) == pytest.approx(1.0)


class TestNoise:
    def _flat_truth(self, n=20000):
        camera = ExactRsCamera(np.eye(3), [0.0, 0.0, 2.5], np.zeros(3), np.zeros(3), 0.0)
        zeros = np.zeros((n, 2))
        return SceneTruth(camera, np.zeros((n, 3)), zeros, np.full(n, 2.5),
                          FRAME_HALF_EXTENT, 720)

    def test_sigma_scales_with_pixel_size(self, rng):
        truth = self._flat_truth()
        noisy = add_noise(truth, 1.5, rng)
        measured = noisy.std()
        expected = 1.5 * truth.pixel_size
        assert abs(measured - expected) / expected < 0.05

    def test_zero_sigma_is_exact_copy(self, rng):
        truth = self._flat_truth(n=10)
        state = rng.bit_generator.state
        noisy = add_noise(truth, 0.0, rng)
        np.testing.assert_array_equal(noisy, truth.image)
        assert noisy is not truth.image
        assert rng.bit_generator.state == state  # rng untouched

    def test_negative_sigma_rejected(self, rng):
        with pytest.raises(ValueError):
            add_noise(self._flat_truth(n=4), -0.1, rng)


class TestPoseErrors:
    def test_model_estimate_against_hand_computation(self, rng):
        truth = generate_scene(SceneConfig(num_points=6), MotionConfig(0.1, 10.0), rng)
        v = np.array([0.01, -0.02, 0.015])
        dC = np.array([0.003, -0.001, 0.002])
        dw = np.array([1e-4, -2e-4, 5e-5])
        dt = np.array([-2e-4, 1e-4, 3e-4])
        est = RsCameraModel(v, truth.camera.C + dC,
                            truth.camera.w_axis_angle + dw, truth.camera.t + dt)
        errors = pose_errors(est, truth)
        assert errors.position == pytest.approx(np.linalg.norm(dC))
        r_est = polar_rotation(np.eye(3) + skew(v))
        expected_deg = np.degrees(
            Rotation.from_matrix(r_est @ truth.camera.R_v.T).magnitude()
        )
        assert errors.orientation_deg == pytest.approx(expected_deg, abs=1e-9)
        scale = truth.per_frame_scale
        assert errors.w_error == pytest.approx(math.degrees(np.linalg.norm(dw) * scale))
        assert errors.t_error == pytest.approx(np.linalg.norm(dt) * scale)

    def test_perspective_estimate_has_no_velocity_errors(self, still_truth):
        cand = PoseCandidate(still_truth.camera.R_v, still_truth.camera.C)
        errors = pose_errors(cand, still_truth)
        assert errors.position == 0.0
        assert errors.orientation_deg == pytest.approx(0.0, abs=1e-9)
        assert math.isnan(errors.w_error)
        assert math.isnan(errors.t_error)

    def test_prerotation_composes_before_comparison(self, rng):
        cfg = SceneConfig(num_points=6, orientation_mode="random")
        truth = generate_scene(cfg, MotionConfig(), rng)
        r_pre = truth.camera.R_v
        cand = PoseCandidate(np.eye(3), truth.camera.C)
        errors = pose_errors(cand, truth, R_pre=r_pre)
        assert errors.orientation_deg == pytest.approx(0.0, abs=1e-9)

    def test_exact_solve_scores_near_zero(self, still_truth):
        sol = r6p_iterative(
            "r6p-vfix", (still_truth.world[:6], still_truth.image[:6])
        )
        errors = pose_errors(sol, still_truth)
        assert errors.position < 1e-6
        assert errors.orientation_deg < 1e-4


class TestPerspectiveBaselineDegrades:
    def test_motion_hurts_the_still_camera_model(self):
        rng = np.random.default_rng(99)
        rest, moving = [], []
        for _ in range(25):
            t0 = generate_scene(SceneConfig(num_points=6), MotionConfig(), rng)
            t1 = generate_scene(SceneConfig(num_points=6), MotionConfig(0.3, 30.0), rng)
            rest.append(pose_errors(p3p_best(t0.correspondences()), t0).position)
            moving.append(pose_errors(p3p_best(t1.correspondences()), t1).position)
        assert np.median(rest) < 1e-6
        assert np.median(moving) > 1e-3


class TestCsvOutput:
    def test_columns_cover_every_record_field(self):
        assert CSV_COLUMNS == (
            "sweep_value", "solver_id", "trial", "position_error",
            "orientation_error", "w_error", "t_error", "algebraic_residual",
            "iterations", "wall_time", "failed", "inlier_count",
        )

    def test_same_seed_byte_identical(self):
        outs = []
        for _ in range(2):
            buf = io.StringIO()
            run_experiment("motion-sweep", trials=2, solvers=("r6p-vfix",),
                           out=buf, seed=13)
            outs.append(buf.getvalue())
        assert outs[0] == outs[1]
        header = outs[0].splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)

    def test_write_to_path(self, tmp_path):
        records = run_experiment("translation-only", trials=1, solvers=("r6p-vct-w",))
        target = tmp_path / "sweep.csv"
        write_records_csv(records, target)
        lines = target.read_text().splitlines()
        assert len(lines) == len(records) + 1


class TestRunExperiment:
    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            run_experiment("speed-sweep", trials=1)

    def test_rejects_unknown_solver(self):
        with pytest.raises(ValueError):
            run_experiment("motion-sweep", trials=1, solvers=("r5p",))

    def test_rejects_nonpositive_trials(self):
        with pytest.raises(ValueError):
            run_experiment("motion-sweep", trials=0)

    def test_kind_registry(self):
        assert set(EXPERIMENT_KINDS) == {
            "motion-sweep", "noise-sweep", "translation-only",
            "linearization-offset", "p3p-init", "convergence", "ransac-outliers",
        }

    def test_motion_sweep_structure(self):
        trials = 2
        records = run_experiment("motion-sweep", trials=trials, solvers=("r6p-vfix",))
        sweep_values = sorted({r.sweep_value for r in records})
        np.testing.assert_allclose(sweep_values, np.linspace(0.0, 0.3, 7), atol=1e-12)
        trial_rows = [r for r in records if r.trial >= 0]
        median_rows = [r for r in records if r.trial == -1]
        assert len(trial_rows) == 7 * trials
        assert len(median_rows) == 7
        assert all(r.inlier_count == -1 for r in trial_rows)
        assert all(r.wall_time == 0.0 for r in records)  # timing off by default

    def test_median_row_aggregates_trials(self):
        records = run_experiment("translation-only", trials=5, solvers=("r6p-vfix",))
        for sweep_value in {r.sweep_value for r in records}:
            group = [r for r in records
                     if r.sweep_value == sweep_value and r.trial >= 0 and not r.failed]
            med = [r for r in records if r.sweep_value == sweep_value and r.trial == -1]
            assert len(med) == 1
            expected = float(np.median([r.position_error for r in group]))
            assert med[0].position_error == pytest.approx(expected, nan_ok=True)

    def test_convergence_rows_are_iteration_curves(self):
        records = run_experiment("convergence", trials=2, solvers=("r6p-vfix",))
        trial_rows = [r for r in records if r.trial >= 0 and not r.failed]
        assert trial_rows
        for r in trial_rows:
            assert r.sweep_value == r.iterations
            assert 1.0 <= r.sweep_value <= 50.0
        # residuals stabilize: last iteration no worse than the first
        by_trial = {}
        for r in trial_rows:
            by_trial.setdefault(r.trial, []).append(r)
        for rows in by_trial.values():
            rows.sort(key=lambda r: r.sweep_value)
            assert rows[-1].algebraic_residual <= rows[0].algebraic_residual + 1e-12

    def test_ransac_outliers_records_inlier_counts(self):
        records = run_experiment("ransac-outliers", trials=1, num_points=30,
                                 ransac_iterations=40, solvers=("r6p-vfix",))
        trial_rows = [r for r in records if r.trial >= 0 and not r.failed]
        assert trial_rows
        assert all(r.inlier_count >= 0 for r in trial_rows)
        assert sorted({r.sweep_value for r in records}) == [0.1, 0.2, 0.3, 0.4, 0.5]

    def test_failures_recorded_not_raised(self):
        """One-point scenes make every solver fail; the sweep still returns
        a full grid with failed=1 rows and NaN medians."""
        records = run_experiment("motion-sweep", trials=1, num_points=1,
                                 solvers=("r6p-vfix",))
        trial_rows = [r for r in records if r.trial >= 0]
        assert all(r.failed == 1 for r in trial_rows)
        assert all(math.isnan(r.position_error) for r in trial_rows)


class TestConfigValidation:
    def test_scene_config_bounds(self):
        with pytest.raises(ValueError):
            SceneConfig(camera_distance_range=(3.0, 2.0))
        with pytest.raises(ValueError):
            SceneConfig(fov_degrees=0.0)
        with pytest.raises(ValueError):
            SceneConfig(num_points=0)
        with pytest.raises(ValueError):
            SceneConfig(orientation_mode="tilted")

    def test_motion_config_bounds(self):
        with pytest.raises(ValueError):
            MotionConfig(translational_per_frame=-0.1)
        with pytest.raises(ValueError):
            MotionConfig(angular_deg_per_frame=-1.0)
