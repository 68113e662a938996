"""HTTP endpoints: payload validation, solution serialization, error mapping."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from rspose.service import create_app
from rspose.synthbench import MotionConfig, SceneConfig, generate_scene, spike_outliers


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def _payload(truth, solver, **extra):
    body = {
        "solver": solver,
        "world": truth.world.tolist(),
        "image": truth.image.tolist(),
    }
    body.update(extra)
    return body


@pytest.fixture(scope="module")
def still_truth():
    rng = np.random.default_rng(77)
    return generate_scene(SceneConfig(num_points=9), MotionConfig(), rng)


@pytest.fixture(scope="module")
def moving_truth():
    rng = np.random.default_rng(78)
    return generate_scene(SceneConfig(num_points=9), MotionConfig(0.1, 10.0), rng)


class TestSolversEndpoint:
    def test_lists_all_solvers(self, client):
        resp = client.get("/solvers")
        assert resp.status_code == 200
        info = {entry["solver"]: entry for entry in resp.json()}
        assert set(info) == {
            "p3p", "r6p-vc-wt", "r6p-vct-w", "r6p-vct-wt", "r6p-vfix", "r9p"
        }
        assert info["p3p"]["sample_size"] == 3
        assert info["r9p"]["sample_size"] == 9
        assert info["r6p-vfix"]["sample_size"] == 6
        assert info["r6p-vfix"]["iterative"] is True
        assert info["p3p"]["iterative"] is False


class TestSolveEndpoint:
    def test_rolling_shutter_solution(self, client, still_truth):
        resp = client.post("/solve", json=_payload(still_truth, "r6p-vfix"))
        assert resp.status_code == 200
        body = resp.json()
        assert body["solver"] == "r6p-vfix"
        assert body["n_points"] == 9
        sol = body["solution"]
        assert sol["kind"] == "rolling-shutter"
        assert sol["converged"] is True
        assert np.abs(sol["w"]).max() < 1e-6
        np.testing.assert_allclose(sol["C"], still_truth.camera.C, atol=1e-6)

    def test_perspective_solution(self, client, still_truth):
        resp = client.post("/solve", json=_payload(still_truth, "p3p"))
        assert resp.status_code == 200
        sol = resp.json()["solution"]
        assert sol["kind"] == "perspective"
        r = np.array(sol["R"])
        np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-9)
        assert sol["residual"] < 1e-8

    def test_nine_point_solution(self, client, moving_truth):
        resp = client.post("/solve", json=_payload(moving_truth, "r9p"))
        assert resp.status_code == 200
        sol = resp.json()["solution"]
        assert sol["kind"] == "nine-point"
        assert np.array(sol["R_RS"]).shape == (3, 3)
        assert sol["w"] is None

    def test_prerotation_returned(self, client):
        rng = np.random.default_rng(79)
        cfg = SceneConfig(num_points=6, orientation_mode="random")
        truth = generate_scene(cfg, MotionConfig(), rng)
        resp = client.post(
            "/solve", json=_payload(truth, "r6p-vfix", prerotate_p3p=True)
        )
        assert resp.status_code == 200
        pre = np.array(resp.json()["prerotation"])
        assert pre.shape == (3, 3)
        np.testing.assert_allclose(pre @ pre.T, np.eye(3), atol=1e-9)

    def test_domain_error_maps_to_400(self, client, still_truth):
        payload = _payload(still_truth, "r6p-vfix")
        payload["world"] = payload["world"][:5]
        payload["image"] = payload["image"][:5]
        resp = client.post("/solve", json=payload)
        assert resp.status_code == 400
        body = resp.json()
        assert body["error"] == "TooFewPoints"
        assert "detail" in body

    def test_mismatched_lengths_rejected(self, client, still_truth):
        payload = _payload(still_truth, "r6p-vfix")
        payload["image"] = payload["image"][:-1]
        assert client.post("/solve", json=payload).status_code == 422

    def test_bad_row_width_rejected(self, client, still_truth):
        payload = _payload(still_truth, "r6p-vfix")
        payload["world"][0] = [1.0, 2.0]
        assert client.post("/solve", json=payload).status_code == 422

    def test_unknown_solver_rejected(self, client, still_truth):
        assert client.post(
            "/solve", json=_payload(still_truth, "r5p")
        ).status_code == 422


class TestRansacEndpoint:
    def test_clean_data_all_inliers(self, client, moving_truth):
        payload = _payload(
            moving_truth, "r6p-vfix",
            iterations=50, units_per_pixel=moving_truth.pixel_size,
        )
        resp = client.post("/ransac", json=payload)
        assert resp.status_code == 200
        body = resp.json()
        assert body["inlier_count"] == 9
        assert body["inlier_mask"] == [True] * 9
        assert body["inlier_mean_error_px"] < 2.0
        assert body["solution"]["kind"] == "rolling-shutter"

    def test_outliers_flagged(self, client):
        rng = np.random.default_rng(80)
        truth = generate_scene(SceneConfig(num_points=40), MotionConfig(0.1, 10.0), rng)
        corrupted, outliers = spike_outliers(
            truth.image, 0.3, truth.frame_half_extent, rng
        )
        payload = {
            "solver": "r6p-vfix",
            "world": truth.world.tolist(),
            "image": corrupted.tolist(),
            "iterations": 400,
            "seed": 5,
            "units_per_pixel": truth.pixel_size,
        }
        resp = client.post("/ransac", json=payload)
        assert resp.status_code == 200
        mask = np.array(resp.json()["inlier_mask"])
        np.testing.assert_array_equal(mask, ~outliers)

    def test_validation_bounds(self, client, moving_truth):
        payload = _payload(moving_truth, "r6p-vfix", iterations=0)
        assert client.post("/ransac", json=payload).status_code == 422
        payload = _payload(moving_truth, "r6p-vfix", threshold_px=0.0)
        assert client.post("/ransac", json=payload).status_code == 422
