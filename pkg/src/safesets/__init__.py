"""Black-box estimation of safe perception-performance sets.

Given a stochastic simulator parameterized by perception performance
characteristics, identify every grid point whose failure probability is below
a threshold, at a required confidence, with as few simulation episodes as
possible. Provides a Gaussian-process level-set baseline, a threshold-bandit
baseline, and smoothing bandits with per-point kernel learning, plus the
simulators, estimation loop, metrics, and CLI used to compare them.
"""

from .core import (
    CountTable,
    GridDim,
    ParamGrid,
    RngStream,
    SafeSetEstimate,
    SafetyConfig,
    build_grid,
    episode_stream,
    nearest_grid_point,
)

__version__ = "0.1.0"

__all__ = [
    "CountTable",
    "GridDim",
    "ParamGrid",
    "RngStream",
    "SafeSetEstimate",
    "SafetyConfig",
    "build_grid",
    "episode_stream",
    "nearest_grid_point",
    "__version__",
]
