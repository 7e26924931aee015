"""Beta-Bernoulli posterior over failure probabilities, robust safe-set
extraction, and the DKWUCB acquisition rule.

Counts enter as successes p and failures q per grid point. With a uniform
prior the success probability is Beta(1 + p, 1 + q), so the failure
probability is Beta(1 + q, 1 + p); a point joins the safe set when the
delta-quantile of that failure distribution sits at or below gamma. All
formulas accept fractional (smoothed) counts: the Beta functions generalize
through the gamma function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, betaincinv

from .core import CountTable, SafeSetEstimate, SafetyConfig

__all__ = [
    "BetaDist",
    "SafeSetSaturated",
    "failure_posterior",
    "beta_quantile",
    "beta_cdf",
    "safe_quantiles",
    "bandit_safe_set",
    "dkwucb_scores",
    "dkwucb_select",
    "exploration_bonus",
]


class SafeSetSaturated(Exception):
    """Every arm is already classified safe; the estimation loop may stop."""


@dataclass(frozen=True)
class BetaDist:
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"Beta parameters must be positive, got ({self.alpha}, {self.beta})")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)


def failure_posterior(p: float, q: float) -> BetaDist:
    """Posterior over the failure probability after p successes and q failures,
    starting from the uniform Beta(1, 1) prior."""
    if p < 0 or q < 0:
        raise ValueError(f"counts must be non-negative, got p={p}, q={q}")
    return BetaDist(alpha=1.0 + q, beta=1.0 + p)


def beta_quantile(dist: BetaDist, u: float) -> float:
    """Inverse CDF of the Beta distribution at u in (0, 1)."""
    if not (0.0 < u < 1.0):
        raise ValueError(f"quantile level must be in (0, 1), got {u}")
    return float(betaincinv(dist.alpha, dist.beta, u))


def beta_cdf(dist: BetaDist, x: float) -> float:
    return float(betainc(dist.alpha, dist.beta, np.clip(x, 0.0, 1.0)))


def safe_quantiles(counts: CountTable, delta: float) -> np.ndarray:
    """Vectorized delta-quantile of the failure posterior at every point."""
    return betaincinv(1.0 + counts.q, 1.0 + counts.p, delta)


def bandit_safe_set(counts: CountTable, cfg: SafetyConfig) -> SafeSetEstimate:
    """Points whose failure-probability delta-quantile clears the threshold."""
    stat = safe_quantiles(counts, cfg.delta)
    return SafeSetEstimate(mask=stat <= cfg.gamma, statistic=stat)


def exploration_bonus(n: np.ndarray, c: float) -> np.ndarray:
    """Count-based exploration bonus; clamped at 0 when c > 2 would push the
    log term negative (only c <= 2 is exercised in practice)."""
    n = np.asarray(n, dtype=float)
    log_term = max(np.log(2.0 / c), 0.0)
    with np.errstate(divide="ignore"):
        return np.where(n > 0, np.sqrt(log_term / (2.0 * np.maximum(n, 1e-300))), 0.0)


def dkwucb_scores(
    counts: CountTable, safe: SafeSetEstimate, cfg: SafetyConfig, c: float
) -> np.ndarray:
    """Acquisition score per arm: posterior CDF at gamma plus an exploration
    bonus; arms already classified safe score -inf, unvisited arms get +1."""
    if c <= 0:
        raise ValueError(f"exploration constant must be positive, got {c}")
    n = counts.n
    cdf_at_gamma = betainc(1.0 + counts.q, 1.0 + counts.p, cfg.gamma)
    scores = cdf_at_gamma + np.where(n > 0, exploration_bonus(n, c), 1.0)
    scores[safe.mask] = -np.inf
    return scores


def dkwucb_select(
    counts: CountTable, safe: SafeSetEstimate, cfg: SafetyConfig, c: float
) -> int:
    """Arm with the highest acquisition score; ties go to the lowest index.

    Raises SafeSetSaturated when every arm is already in the safe set.
    """
    if bool(np.all(safe.mask)):
        raise SafeSetSaturated("all arms are classified safe")
    scores = dkwucb_scores(counts, safe, cfg, c)
    return int(np.argmax(scores))
