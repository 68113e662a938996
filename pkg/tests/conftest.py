"""Shared fixtures: reproducible synthetic scenes in the solvers' own models."""

import numpy as np
import pytest

from rspose.geometry import RsCameraModel, project_points_linearized


@pytest.fixture
def linearized_scene():
    """Factory for noiseless scenes that are exact under the double-linearized
    model: returns (model, world (n,3), image (n,2)) with every projection
    converged and in front of the camera."""

    def make(seed, n=6, v_scale=0.05, w_scale=0.02, t_scale=0.05,
             zero_w=False, zero_t=False):
        rng = np.random.default_rng(seed)
        for _ in range(50):
            world = rng.uniform(-1.0, 1.0, size=(n, 3))
            v = rng.normal(0.0, v_scale, 3)
            w = np.zeros(3) if zero_w else rng.normal(0.0, w_scale, 3)
            t = np.zeros(3) if zero_t else rng.normal(0.0, t_scale, 3)
            C = np.array([rng.normal(0.0, 0.1), rng.normal(0.0, 0.1),
                          rng.uniform(2.0, 3.0)])
            model = RsCameraModel(v, C, w, t)
            image, depth, status = project_points_linearized(model, world)
            rows = image[:, 0]
            if np.all(status == 0) and np.all(depth > 0) and np.ptp(rows) > 1e-6:
                return model, world, image
        raise RuntimeError(f"no usable scene for seed {seed}")

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
