import numpy as np
import pytest

from safesets import SafetyConfig, build_grid
from safesets.driver import mc_ground_truth

PEND_DIMS = [("sigma_theta", 0.0, 0.2, 21), ("sigma_omega", 0.0, 0.2, 21)]
DAA_SLICE_DIMS = [("x0", 1000.0, 3000.0, 21), ("y0", 0.8, 1.2, 21), ("hfov", 60.0, 60.0, 1)]


@pytest.fixture(scope="session")
def pend_grid():
    return build_grid(PEND_DIMS)


@pytest.fixture(scope="session")
def pend_safety():
    return SafetyConfig(gamma=0.1, delta=0.95)


@pytest.fixture(scope="session")
def pend_truth(pend_grid, pend_safety):
    """Monte Carlo reference for the pendulum grid; shared by the slower
    driver and acceptance tests."""
    return mc_ground_truth("pendulum", pend_grid, 2000, pend_safety, seed=2024)


def rand_counts(rng: np.random.Generator, n: int, scale: float = 30.0):
    from safesets import CountTable

    p = np.floor(rng.random(n) * scale)
    q = np.floor(rng.random(n) * scale)
    return CountTable(p, q, raw=True)
