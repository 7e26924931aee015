"""Gaussian-process level-set estimation baseline.

Failure-probability estimates from batched Monte Carlo evaluations are
treated as noisy observations of an unknown surface; a zero-mean GP with the
weighted squared exponential kernel (on normalized grid coordinates) gives a
posterior mean and standard deviation at every grid point. A point is called
safe when mean + beta * std clears the threshold, with beta the standard
normal quantile at the required confidence. Acquisition picks the evaluation
point whose hypothetical observation maximizes the expected safe-set size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import ndtr, ndtri

from .core import ParamGrid, SafeSetEstimate, SafetyConfig
from .kernel import KernelSpec, kernel_matrix

__all__ = [
    "GpDataset",
    "GpPosterior",
    "gp_condition",
    "gp_posterior_cov",
    "estimator_noise",
    "gp_safe_set",
    "mile_select",
    "expected_safe_counts",
    "NOISE_FLOOR",
]

NOISE_FLOOR = 1e-6
_JITTER_START = 1e-10
_JITTER_MAX = 1e-6
_VAR_CLAMP = -1e-8


@dataclass(frozen=True)
class GpDataset:
    """Evaluated points with their failure-probability estimates and
    per-evaluation observation noise variances."""

    points: np.ndarray = field(repr=False)  # (t, d) physical coordinates
    values: np.ndarray = field(repr=False)
    noise: np.ndarray = field(repr=False)
    episodes_per_eval: int = 100

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        nse = np.asarray(self.noise, dtype=float).reshape(-1)
        if pts.shape[0] != vals.shape[0] or vals.shape[0] != nse.shape[0]:
            raise ValueError("points, values and noise must have equal lengths")
        if vals.size and (np.min(vals) < 0.0 or np.max(vals) > 1.0):
            raise ValueError("values must lie in [0, 1]")
        if nse.size and np.min(nse) <= 0.0:
            raise ValueError("noise variances must be positive")
        if self.episodes_per_eval < 1:
            raise ValueError("episodes_per_eval must be >= 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "noise", nse)

    @classmethod
    def empty(cls, n_dims: int, episodes_per_eval: int = 100) -> "GpDataset":
        return cls(
            points=np.empty((0, n_dims)),
            values=np.empty(0),
            noise=np.empty(0),
            episodes_per_eval=episodes_per_eval,
        )

    def __len__(self) -> int:
        return self.values.shape[0]

    def extended(self, point: np.ndarray, value: float, noise: float) -> "GpDataset":
        return GpDataset(
            points=np.vstack([self.points, np.asarray(point, dtype=float).reshape(1, -1)]),
            values=np.append(self.values, value),
            noise=np.append(self.noise, noise),
            episodes_per_eval=self.episodes_per_eval,
        )


@dataclass(frozen=True)
class GpPosterior:
    mean: np.ndarray = field(repr=False)
    std: np.ndarray = field(repr=False)
    spec: KernelSpec = KernelSpec(length=0.1)


def estimator_noise(p_hat: float, n: int) -> float:
    """Observation-noise variance for a Monte Carlo failure-rate estimate.

    Binomial variance with Laplace smoothing so the noise never collapses to
    zero at estimates of exactly 0 or 1, floored at NOISE_FLOOR.
    """
    if n < 1:
        raise ValueError(f"episode count must be >= 1, got {n}")
    p_smooth = (p_hat * n + 1.0) / (n + 2.0)
    return max(p_smooth * (1.0 - p_smooth) / n, NOISE_FLOOR)


def _chol_with_jitter(a: np.ndarray) -> tuple[np.ndarray, float]:
    jitter = _JITTER_START
    while jitter <= _JITTER_MAX:
        try:
            return np.linalg.cholesky(a + jitter * np.eye(a.shape[0])), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise np.linalg.LinAlgError(
        f"kernel matrix not positive-definite even with jitter {_JITTER_MAX}"
    )


def _train_solve(data: GpDataset, grid: ParamGrid, spec: KernelSpec):
    """Cholesky factor of the noisy training kernel and the cross-kernel to
    the grid, all in normalized coordinates."""
    xu = grid.normalize(data.points)
    k_train = kernel_matrix(xu, xu, spec, truncate=0.0).entries + np.diag(data.noise)
    chol, _ = _chol_with_jitter(k_train)
    k_cross = kernel_matrix(xu, grid.unit_points, spec, truncate=0.0).entries  # (t, n)
    return chol, k_cross


def gp_condition(data: GpDataset, grid: ParamGrid, spec: KernelSpec) -> GpPosterior:
    """Zero-mean GP regression posterior at every grid point.

    With no training data this is the prior: mean 0, std 1 (unit-diagonal
    kernel). Solved through a Cholesky factorization with diagonal jitter
    escalating from 1e-10 by decades up to 1e-6.
    """
    n = grid.n_points
    if len(data) == 0:
        return GpPosterior(mean=np.zeros(n), std=np.ones(n), spec=spec)
    chol, k_cross = _train_solve(data, grid, spec)
    alpha = solve_triangular(
        chol.T, solve_triangular(chol, data.values, lower=True), lower=False
    )
    mean = k_cross.T @ alpha
    v = solve_triangular(chol, k_cross, lower=True)  # (t, n)
    var = 1.0 - np.sum(v * v, axis=0)
    bad = var < _VAR_CLAMP
    if np.any(bad):
        raise FloatingPointError(
            f"posterior variance fell below clamp tolerance: min {var.min():.3e}"
        )
    return GpPosterior(mean=mean, std=np.sqrt(np.maximum(var, 0.0)), spec=spec)


def gp_posterior_cov(
    data: GpDataset, grid: ParamGrid, spec: KernelSpec, k_grid: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and full covariance over the grid (n x n)."""
    n = grid.n_points
    if k_grid is None:
        k_grid = kernel_matrix(grid.unit_points, grid.unit_points, spec, truncate=0.0).entries
    if len(data) == 0:
        return np.zeros(n), k_grid.copy()
    chol, k_cross = _train_solve(data, grid, spec)
    alpha = solve_triangular(
        chol.T, solve_triangular(chol, data.values, lower=True), lower=False
    )
    mean = k_cross.T @ alpha
    v = solve_triangular(chol, k_cross, lower=True)
    cov = k_grid - v.T @ v
    return mean, cov


def gp_safe_set(post: GpPosterior, cfg: SafetyConfig) -> SafeSetEstimate:
    """Robust test: mean + beta * std <= gamma with beta = Phi^{-1}(delta)."""
    beta = float(ndtri(cfg.delta))
    stat = post.mean + beta * post.std
    return SafeSetEstimate(mask=stat <= cfg.gamma, statistic=stat)


def expected_safe_counts(
    data: GpDataset,
    grid: ParamGrid,
    spec: KernelSpec,
    cfg: SafetyConfig,
    k_grid: np.ndarray | None = None,
) -> np.ndarray:
    """Expected safe-set size after one hypothetical evaluation at each
    candidate grid point.

    For candidate x, the updated std at every point i is deterministic given
    the kernel and the hypothetical observation noise, while the updated mean
    at i is Gaussian around the current mean with std s_i(x) = |cov(i,x)| /
    sqrt(var(x) + noise(x)). Points already classified safe stay counted (the
    safe set accumulates), so the score is #safe + sum over the rest of
    Phi((gamma - beta*std_i' - mean_i) / s_i(x)).
    """
    beta = float(ndtri(cfg.delta))
    mean, cov = gp_posterior_cov(data, grid, spec, k_grid=k_grid)
    var = np.maximum(np.diagonal(cov), 0.0)
    std = np.sqrt(var)
    safe_now = (mean + beta * std) <= cfg.gamma

    n_eval = data.episodes_per_eval
    p_smooth = (np.clip(mean, 0.0, 1.0) * n_eval + 1.0) / (n_eval + 2.0)
    nu = np.maximum(p_smooth * (1.0 - p_smooth) / n_eval, NOISE_FLOOR)
    denom = var + nu  # (n,) candidate-wise
    # s[i, x] and updated variance for every (point, candidate) pair
    s = np.abs(cov) / np.sqrt(denom)[None, :]
    var_new = np.maximum(var[:, None] - cov**2 / denom[None, :], 0.0)
    margin = cfg.gamma - beta * np.sqrt(var_new) - mean[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        z = margin / s
    prob = np.where(s > 0, ndtr(z), (margin >= 0).astype(float))
    prob[safe_now, :] = 1.0
    return prob.sum(axis=0)


def mile_select(
    post: GpPosterior,
    data: GpDataset,
    grid: ParamGrid,
    cfg: SafetyConfig,
    k_grid: np.ndarray | None = None,
) -> int:
    """Candidate whose hypothetical evaluation gives the largest expected
    safe-set size; ties break to the lowest flat index.

    A degenerate posterior (std 0 everywhere) falls back to the lowest-index
    point that has not been evaluated yet.
    """
    if np.all(post.std <= 1e-12):
        evaluated = {pt.tobytes() for pt in np.atleast_2d(data.points)}
        for idx in range(grid.n_points):
            if grid.points[idx].tobytes() not in evaluated:
                return idx
        return 0
    scores = expected_safe_counts(data, grid, post.spec, cfg, k_grid=k_grid)
    # scores tied within numerical noise resolve to the lowest flat index
    return int(np.argmax(scores >= scores.max() - 1e-9))
