"""Smoothing bandits and per-point kernel learning.

The smoothing bandit keeps the Beta-Bernoulli machinery but feeds it
kernel-smoothed counts, so arms share their neighbors' evidence. Kernel
learning goes one step further: for every grid point it maintains a discrete
posterior over the kernel length parameter, scored by how well the smoothed
counts predict the point's own raw counts. The score is the Binomial-Beta
compound likelihood

    integral Binomial(p | theta, N) Beta(theta | 1 + p_hat, 1 + q_hat) dtheta

which collapses to a ratio of gamma functions. The failure-probability
distribution at a point is then a mixture of smoothed Beta posteriors weighted
by the length posterior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, gammaln

from . import betamodel
from .core import CountTable, ParamGrid, SafeSetEstimate, SafetyConfig
from .kernel import GridKernel, KernelBank, KernelSpec

__all__ = [
    "LengthGridSpec",
    "LengthPosterior",
    "DiscreteDist",
    "smoothed_state",
    "smoothing_bandit_safe_set",
    "smoothed_dkwucb_select",
    "length_likelihood",
    "length_posterior",
    "length_posterior_all",
    "marginal_failure_posterior",
    "discrete_quantile",
    "SmoothingBanditModel",
    "KernelLearningModel",
]


@dataclass(frozen=True)
class LengthGridSpec:
    """Discretization of the kernel length parameter.

    The default ladder spans one to three grid spacings (log-spaced). Lengths
    well below the grid spacing are indistinguishable on the grid (they all
    smooth nothing), yet they would hold prior mass forever and keep the
    mixture test from ever classifying a point from its neighbors alone --
    which is the whole point of smoothing. Lengths of many grid spacings stop
    being local evidence sharing: at the midpoint of a monotone transition
    they act as unbiased global pooling and the likelihood rewards them even
    where the surface changes fastest, washing out the short-length response
    the learner exists to produce.
    """

    bins: int = 100
    lo: float = 0.05
    hi: float = 0.15
    spacing: str = "log"

    def __post_init__(self) -> None:
        if self.bins < 2:
            raise ValueError(f"need at least 2 length bins, got {self.bins}")
        if not (0.0 < self.lo < self.hi):
            raise ValueError(f"need 0 < lo < hi, got lo={self.lo}, hi={self.hi}")
        if self.spacing not in ("log", "linear"):
            raise ValueError(f"spacing must be 'log' or 'linear', got {self.spacing!r}")

    @classmethod
    def for_grid(cls, grid: ParamGrid, bins: int = 100) -> "LengthGridSpec":
        """Default ladder spanning 1x to 3x the normalized grid spacing."""
        spacing = grid.unit_spacing()
        finite = spacing[np.isfinite(spacing)]
        delta = float(np.min(finite)) if finite.size else 0.05
        return cls(bins=bins, lo=delta, hi=3.0 * delta, spacing="log")

    def values(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.lo, self.hi, self.bins)
        return np.linspace(self.lo, self.hi, self.bins)

    def uniform_prior(self) -> np.ndarray:
        return np.full(self.bins, 1.0 / self.bins)


@dataclass(frozen=True)
class LengthPosterior:
    """Per-point discrete distributions over the length ladder; rows sum to 1."""

    lengths: np.ndarray
    probs: np.ndarray  # (n_points, bins)

    def mean_length(self) -> np.ndarray:
        return self.probs @ self.lengths


@dataclass(frozen=True)
class DiscreteDist:
    """Discrete probability distribution on an increasing support in [0, 1]."""

    support: np.ndarray
    probs: np.ndarray


def discrete_quantile(dist: DiscreteDist, u: float) -> float:
    """Quantile by linear interpolation of the discrete CDF."""
    if not (0.0 < u < 1.0):
        raise ValueError(f"quantile level must be in (0, 1), got {u}")
    cdf = np.cumsum(dist.probs)
    cdf = cdf / cdf[-1]
    return float(np.interp(u, cdf, dist.support))


_kernel_cache: dict[tuple[int, float, bytes], GridKernel] = {}


def _grid_kernel(grid: ParamGrid, spec: KernelSpec) -> GridKernel:
    wkey = b"" if spec.weights is None else np.asarray(spec.weights).tobytes()
    key = (id(grid), spec.length, wkey)
    if key not in _kernel_cache:
        _kernel_cache[key] = GridKernel(grid, spec)
    return _kernel_cache[key]


def smoothed_state(counts: CountTable, grid: ParamGrid, spec: KernelSpec) -> CountTable:
    """Raw counts smoothed with the grid's cached kernel operator."""
    if not counts.raw:
        raise ValueError("smoothed_state expects raw counts")
    return _grid_kernel(grid, spec).smooth(counts)


def smoothing_bandit_safe_set(
    counts: CountTable, grid: ParamGrid, spec: KernelSpec, cfg: SafetyConfig
) -> SafeSetEstimate:
    """Safe-set test on smoothed rather than observed counts."""
    return betamodel.bandit_safe_set(smoothed_state(counts, grid, spec), cfg)


def smoothed_dkwucb_select(
    counts: CountTable,
    grid: ParamGrid,
    spec: KernelSpec,
    current_safe: SafeSetEstimate,
    cfg: SafetyConfig,
    c: float,
) -> int:
    """DKWUCB acquisition with CDF and episode totals from smoothed counts."""
    return betamodel.dkwucb_select(smoothed_state(counts, grid, spec), current_safe, cfg, c)


def length_likelihood(p_eta, q_eta, p_hat, q_hat):
    """Probability of the raw counts at a point given smoothed counts there.

    Closed form of the Binomial-Beta compound integral; computed in log-space
    via log-gamma and exponentiated at the end. Accepts scalars or arrays
    (broadcast elementwise). Equals 1 exactly when p_eta = q_eta = 0.
    """
    p = np.asarray(p_eta, dtype=float)
    q = np.asarray(q_eta, dtype=float)
    ph = np.asarray(p_hat, dtype=float)
    qh = np.asarray(q_hat, dtype=float)
    if np.any(p < 0) or np.any(q < 0) or np.any(ph < 0) or np.any(qh < 0):
        raise ValueError("counts must be non-negative")
    a = p + 1.0
    b = q + 1.0
    ah = ph + 1.0
    bh = qh + 1.0
    log_like = (
        gammaln(ah + bh)
        + gammaln(a + b - 1.0)
        + gammaln(ah + a - 1.0)
        + gammaln(bh + b - 1.0)
        - gammaln(ah)
        - gammaln(a)
        - gammaln(bh)
        - gammaln(b)
        - gammaln(ah + bh + a + b - 2.0)
    )
    out = np.exp(log_like)
    return float(out) if out.ndim == 0 else out


def _smoothed_per_length(
    counts: CountTable,
    grid: ParamGrid,
    lgrid: LengthGridSpec,
    include_self: bool,
    bank: KernelBank | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed counts under every ladder length; (bins, n) pair."""
    if bank is None:
        bank = KernelBank(grid, lgrid.values())
    p_hat = bank.matvec_all(counts.p)
    q_hat = bank.matvec_all(counts.q)
    if not include_self:
        # unit self-weight: zeroing the diagonal subtracts the raw counts
        p_hat = np.maximum(p_hat - counts.p[None, :], 0.0)
        q_hat = np.maximum(q_hat - counts.q[None, :], 0.0)
    return p_hat, q_hat


def _check_prior(prior: np.ndarray | None, lgrid: LengthGridSpec) -> np.ndarray:
    if prior is None:
        return lgrid.uniform_prior()
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (lgrid.bins,):
        raise ValueError(f"prior must have {lgrid.bins} entries")
    if np.any(prior < 0) or prior.sum() <= 0:
        raise ValueError("prior must be non-negative and not all zero")
    return prior


def length_posterior_all(
    counts: CountTable,
    grid: ParamGrid,
    lgrid: LengthGridSpec,
    prior: np.ndarray | None = None,
    include_self: bool = False,
    bank: KernelBank | None = None,
) -> LengthPosterior:
    """Length posterior at every grid point in one sweep.

    By default the likelihood uses leave-one-out smoothed counts (the point's
    own raw counts removed), so a length scores well only when the *neighbors*
    predict the local data; include_self=True keeps the self-contribution.
    """
    prior = _check_prior(prior, lgrid)
    p_hat, q_hat = _smoothed_per_length(counts, grid, lgrid, include_self, bank)
    like = length_likelihood(counts.p[None, :], counts.q[None, :], p_hat, q_hat)  # (bins, n)
    weighted = like * prior[:, None]
    probs = (weighted / weighted.sum(axis=0)[None, :]).T
    return LengthPosterior(lengths=lgrid.values(), probs=probs)


def length_posterior(
    counts: CountTable,
    grid: ParamGrid,
    eta_index: int,
    lgrid: LengthGridSpec,
    prior: np.ndarray | None = None,
    include_self: bool = False,
    bank: KernelBank | None = None,
) -> np.ndarray:
    """Discrete posterior over the length parameter at one grid point."""
    prior = _check_prior(prior, lgrid)
    if bank is None:
        bank = KernelBank(grid, lgrid.values())
    col = bank.column_all(eta_index)  # kernel row of this point, per length
    p_hat = col @ counts.p
    q_hat = col @ counts.q
    if not include_self:
        p_hat = np.maximum(p_hat - counts.p[eta_index], 0.0)
        q_hat = np.maximum(q_hat - counts.q[eta_index], 0.0)
    like = length_likelihood(counts.p[eta_index], counts.q[eta_index], p_hat, q_hat)
    weighted = like * prior
    return weighted / weighted.sum()


def _failure_logpdf(a: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Log density of Beta(a, b) on an x grid including the endpoints.

    a, b are column vectors (one row per mixture component), a = 1 + q_hat,
    b = 1 + p_hat >= 1 always, so endpoint densities are finite.
    """
    lognorm = gammaln(a + b) - gammaln(a) - gammaln(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        logpdf = (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) + lognorm
    pdf0 = np.where(a[:, 0] == 1.0, lognorm[:, 0], -np.inf)
    pdf1 = np.where(b[:, 0] == 1.0, lognorm[:, 0], -np.inf)
    logpdf[:, 0] = pdf0
    logpdf[:, -1] = pdf1
    return logpdf


def marginal_failure_posterior(
    counts: CountTable,
    grid: ParamGrid,
    eta_index: int,
    lgrid: LengthGridSpec,
    prior: np.ndarray | None = None,
    support_bins: int = 201,
    include_self: bool = False,
    bank: KernelBank | None = None,
) -> DiscreteDist:
    """Failure-probability distribution marginalized over the length posterior.

    A discretized mixture: the smoothed Beta failure posteriors under each
    ladder length, weighted by the point's length posterior, evaluated on a
    uniform grid over [0, 1] and normalized. The mixture components use the
    full smoothed counts; only the length posterior itself is scored
    leave-one-out. The safe-set view of this distribution is its quantile at
    the confidence level, compared against the failure threshold.
    """
    if support_bins < 10:
        raise ValueError(f"need at least 10 support bins, got {support_bins}")
    if bank is None:
        bank = KernelBank(grid, lgrid.values())
    weights = length_posterior(counts, grid, eta_index, lgrid, prior, include_self, bank)
    col = bank.column_all(eta_index)
    p_hat = col @ counts.p
    q_hat = col @ counts.q
    support = np.linspace(0.0, 1.0, support_bins)
    a = 1.0 + q_hat[:, None]
    b = 1.0 + p_hat[:, None]
    pdf = np.exp(_failure_logpdf(a, b, support[None, :]))
    mix = weights @ pdf
    # trapezoid point masses: half weight at the endpoints keeps the discrete
    # CDF within O(h^2) of the true one even for steep densities
    mix[0] *= 0.5
    mix[-1] *= 0.5
    total = mix.sum()
    if not np.isfinite(total) or total <= 0:
        raise FloatingPointError("mixture density is degenerate on the support grid")
    return DiscreteDist(support=support, probs=mix / total)


class SmoothingBanditModel:
    """Incremental fixed-length smoothing bandit state for the estimation loop.

    Raw counts update one episode at a time; the smoothed counts track them by
    adding the kernel column of the evaluated point, which is the matrix
    product applied incrementally.
    """

    def __init__(self, grid: ParamGrid, spec: KernelSpec, cfg: SafetyConfig, c: float = 1.0):
        self.grid = grid
        self.spec = spec
        self.cfg = cfg
        self.c = c
        self._kernel = _grid_kernel(grid, spec)
        self.counts = CountTable.zeros(grid.n_points)
        self._p_hat = np.zeros(grid.n_points)
        self._q_hat = np.zeros(grid.n_points)

    def record(self, idx: int, safe: bool) -> None:
        col = self._kernel.column(idx)
        if safe:
            self.counts.p[idx] += 1.0
            self._p_hat += col
        else:
            self.counts.q[idx] += 1.0
            self._q_hat += col

    def smoothed(self) -> CountTable:
        return CountTable(self._p_hat.copy(), self._q_hat.copy(), raw=False)

    def smoothed_view(self) -> tuple[np.ndarray, np.ndarray]:
        """Internal read-only views of the smoothed count vectors."""
        return self._p_hat, self._q_hat

    def safe_set(self) -> SafeSetEstimate:
        return betamodel.bandit_safe_set(self.smoothed(), self.cfg)

    def select(self, current_safe: SafeSetEstimate) -> int:
        return betamodel.dkwucb_select(self.smoothed(), current_safe, self.cfg, self.c)


class KernelLearningModel:
    """Smoothing bandit whose kernel length is learned per point.

    Keeps smoothed counts under every ladder length incrementally, refreshes
    the per-point length posteriors every `refresh_every` episodes, and
    exposes the two views the loop needs: expected smoothed counts under the
    length posterior (for acquisition) and the mixture failure distribution
    (for the safe-set test). Evaluating the mixture CDF at every point is the
    loop's dominant cost, so the acquisition-side safe mask is cached and
    recomputed every `mask_every` episodes (freezing an arm a few episodes
    late is harmless); reported masks are always computed fresh.
    """

    def __init__(
        self,
        grid: ParamGrid,
        lgrid: LengthGridSpec,
        cfg: SafetyConfig,
        c: float = 1.0,
        refresh_every: int = 100,
        include_self: bool = False,
        prior: np.ndarray | None = None,
        mask_every: int = 10,
    ):
        if refresh_every < 1:
            raise ValueError("refresh_every must be >= 1")
        if mask_every < 1:
            raise ValueError("mask_every must be >= 1")
        self.grid = grid
        self.lgrid = lgrid
        self.cfg = cfg
        self.c = c
        self.refresh_every = refresh_every
        self.include_self = include_self
        self.prior = _check_prior(prior, lgrid)
        self.bank = KernelBank(grid, lgrid.values())
        n = grid.n_points
        self.counts = CountTable.zeros(n)
        self._p_hat = np.zeros((lgrid.bins, n))
        self._q_hat = np.zeros((lgrid.bins, n))
        self._length_probs = np.tile(self.prior / self.prior.sum(), (n, 1))
        self._episodes_since_refresh = 0
        self.mask_every = mask_every
        self._cached_mask: np.ndarray | None = None
        self._episodes_since_mask = 0

    @property
    def length_posteriors(self) -> LengthPosterior:
        return LengthPosterior(lengths=self.lgrid.values(), probs=self._length_probs.copy())

    def record(self, idx: int, safe: bool) -> None:
        col = self.bank.column_all(idx)  # (bins, n)
        if safe:
            self.counts.p[idx] += 1.0
            self._p_hat += col
        else:
            self.counts.q[idx] += 1.0
            self._q_hat += col
        self._episodes_since_refresh += 1
        self._episodes_since_mask += 1
        if self._episodes_since_refresh >= self.refresh_every:
            self.refresh()

    def refresh(self) -> None:
        """Recompute length posteriors (and resync smoothed counts) from the
        raw counts."""
        self._p_hat = self.bank.matvec_all(self.counts.p)
        self._q_hat = self.bank.matvec_all(self.counts.q)
        post = length_posterior_all(
            self.counts, self.grid, self.lgrid, self.prior, self.include_self, self.bank
        )
        self._length_probs = post.probs
        self._episodes_since_refresh = 0
        self._cached_mask = None

    def expected_counts(self) -> CountTable:
        """Smoothed counts averaged over each point's length posterior."""
        p_bar = np.einsum("nb,bn->n", self._length_probs, self._p_hat)
        q_bar = np.einsum("nb,bn->n", self._length_probs, self._q_hat)
        return CountTable(p_bar, q_bar, raw=False)

    def mixture_cdf(self, x) -> np.ndarray:
        """Mixture failure-probability CDF per point; x scalar or (n,) array."""
        x = np.asarray(x, dtype=float)
        comp = betainc(1.0 + self._q_hat, 1.0 + self._p_hat, x if x.ndim == 0 else x[None, :])
        return np.einsum("nb,bn->n", self._length_probs, comp)

    def safe_mask(self) -> np.ndarray:
        """Fresh mixture-test membership at every point."""
        return self.mixture_cdf(self.cfg.gamma) >= self.cfg.delta

    def _acquisition_mask(self) -> np.ndarray:
        if self._cached_mask is None or self._episodes_since_mask >= self.mask_every:
            self._cached_mask = self.safe_mask()
            self._episodes_since_mask = 0
        return self._cached_mask

    def mixture_quantile(self, u: float, tol: float = 1e-12) -> np.ndarray:
        """Mixture quantile per point by bisection on the exact mixture CDF."""
        lo = np.zeros(self.grid.n_points)
        hi = np.ones(self.grid.n_points)
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            above = self.mixture_cdf(mid) >= u
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
            if np.max(hi - lo) < tol:
                break
        return 0.5 * (lo + hi)

    def safe_set(self) -> SafeSetEstimate:
        return SafeSetEstimate(mask=self.safe_mask(), statistic=self.mixture_quantile(self.cfg.delta))

    def select(self) -> int:
        mask = self._acquisition_mask()
        if bool(np.all(mask)):
            raise betamodel.SafeSetSaturated("all arms are classified safe")
        safe = SafeSetEstimate(mask=mask, statistic=np.zeros(mask.shape))
        return betamodel.dkwucb_select(self.expected_counts(), safe, self.cfg, self.c)
