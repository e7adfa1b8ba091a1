import numpy as np
import pytest

from kroneig.model import ForwardProblem


def random_unit_points(rng, n):
    pts = rng.standard_normal((n, 3))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def random_whitened_problem(seed, n_n=5, n_m=15, n_t=6):
    """Random already-whitened instance (identity noise) for oracle tests."""
    rng = np.random.default_rng(seed)
    return ForwardProblem(
        lead_field=rng.standard_normal((n_n, n_m)),
        sensor_data=rng.standard_normal((n_n, n_t)),
        noise_cov_spatial=np.eye(n_n),
        source_points=random_unit_points(rng, n_m),
        time_points=np.sort(rng.uniform(0.0, 0.5, n_t)),
        whitened=True,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
