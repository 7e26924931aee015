"""Estimation loop with pluggable model/acquisition, the Monte Carlo
ground-truth oracle, and evaluation metrics.

One run owns a seed and derives every random stream from it: episode streams
are keyed by (grid index, per-point episode counter) so outcomes at a point do
not depend on when the loop visits it, and acquisition randomness lives on its
own stream. Identical (method, seed, budget) therefore reproduce identical
traces and masks regardless of thread schedule.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from . import betamodel, gp, sim, smoothlearn
from .core import (
    DOMAIN_ACQUISITION,
    DOMAIN_GROUND_TRUTH,
    CountTable,
    ParamGrid,
    SafeSetEstimate,
    SafetyConfig,
    episode_stream,
)
from .kernel import KernelSpec, kernel_matrix

__all__ = [
    "METHOD_KINDS",
    "MethodSpec",
    "Checkpoint",
    "RunTrace",
    "GroundTruth",
    "EvalResult",
    "mc_ground_truth",
    "run_estimation",
    "evaluate",
    "episodes_to_recall",
]

METHOD_KINDS = (
    "gp-mile",
    "bandit-random",
    "bandit-dkwucb",
    "smoothing-dkwucb",
    "smoothing-learned",
)


@dataclass(frozen=True)
class MethodSpec:
    """Estimation method plus its hyperparameters.

    `length` is the kernel length in normalized grid coordinates (smoothing
    and GP methods). The learned-kernel method ignores `length` and uses a
    log-spaced length ladder instead, derived from the grid when `length_lo`
    / `length_hi` are omitted.
    """

    kind: str
    length: float = 0.1
    c: float = 1.0
    episodes_per_eval: int = 100
    length_bins: int = 100
    length_lo: float | None = None
    length_hi: float | None = None
    refresh_every: int = 100
    include_self: bool = False

    def __post_init__(self) -> None:
        if self.kind not in METHOD_KINDS:
            raise ValueError(f"unknown method kind {self.kind!r}; known: {list(METHOD_KINDS)}")
        if self.length <= 0:
            raise ValueError("length must be positive")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.episodes_per_eval < 1:
            raise ValueError("episodes_per_eval must be >= 1")
        if self.length_bins < 2:
            raise ValueError("length_bins must be >= 2")
        if self.refresh_every < 1:
            raise ValueError("refresh_every must be >= 1")
        if (self.length_lo is None) != (self.length_hi is None):
            raise ValueError("length_lo and length_hi must be given together")

    @property
    def episodes_per_unit(self) -> int:
        """Episodes consumed by one loop iteration."""
        return self.episodes_per_eval if self.kind == "gp-mile" else 1

    def length_grid(self, grid: ParamGrid) -> smoothlearn.LengthGridSpec:
        if self.length_lo is not None:
            return smoothlearn.LengthGridSpec(
                bins=self.length_bins, lo=self.length_lo, hi=self.length_hi
            )
        return smoothlearn.LengthGridSpec.for_grid(grid, bins=self.length_bins)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "length": self.length,
            "c": self.c,
            "episodes_per_eval": self.episodes_per_eval,
            "length_bins": self.length_bins,
            "length_lo": self.length_lo,
            "length_hi": self.length_hi,
            "refresh_every": self.refresh_every,
            "include_self": self.include_self,
        }


@dataclass(frozen=True)
class Checkpoint:
    episode: int
    safe_indices: np.ndarray
    precision: float | None = None
    recall: float | None = None


@dataclass
class RunTrace:
    """Ordered episode log plus periodic safe-set snapshots."""

    episode_numbers: np.ndarray
    point_indices: np.ndarray
    outcomes: np.ndarray  # True = safe episode
    checkpoints: list[Checkpoint]
    total_budget: int

    @property
    def episodes_used(self) -> int:
        return int(self.episode_numbers.shape[0])


@dataclass(frozen=True)
class GroundTruth:
    """Monte Carlo failure-probability estimates used as reference truth."""

    p_fail_hat: np.ndarray
    n_per_point: int
    safe_mask: np.ndarray
    gamma: float

    def __post_init__(self) -> None:
        if self.p_fail_hat.shape != self.safe_mask.shape:
            raise ValueError("p_fail_hat and safe_mask must have equal shapes")


@dataclass(frozen=True)
class EvalResult:
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    tn: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
        }


def mc_ground_truth(
    sim_id: str,
    grid: ParamGrid,
    n: int,
    cfg: SafetyConfig,
    seed: int,
    sim_cfg=None,
    threads: int = 1,
) -> GroundTruth:
    """Failure-rate estimate from n episodes at every grid point.

    Episode streams are keyed by (point, episode), so the result is identical
    for any thread count.
    """
    if n < 1:
        raise ValueError("need at least one episode per point")

    def point_rate(i: int) -> float:
        streams = [episode_stream(seed, i, k, DOMAIN_GROUND_TRUTH) for k in range(n)]
        try:
            safe = sim.episode_batch(sim_id, grid.points[i], streams, sim_cfg)
        except Exception as exc:
            raise RuntimeError(
                f"simulator {sim_id!r} failed at grid point {i} ({grid.points[i].tolist()})"
            ) from exc
        return 1.0 - float(np.mean(safe))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rates = list(pool.map(point_rate, range(grid.n_points)))
    else:
        rates = [point_rate(i) for i in range(grid.n_points)]
    p_fail = np.array(rates)
    return GroundTruth(
        p_fail_hat=p_fail, n_per_point=n, safe_mask=p_fail < cfg.gamma, gamma=cfg.gamma
    )


# ---------------------------------------------------------------------------
# per-method model adapters
# ---------------------------------------------------------------------------

class _RawBandit:
    """Raw-count Beta-Bernoulli bandit with incremental statistics.

    Only the evaluated point's posterior changes per episode, so the quantile
    and CDF vectors are updated one entry at a time; select() then matches
    betamodel.dkwucb_select on the same counts exactly.
    """

    def __init__(self, grid: ParamGrid, cfg: SafetyConfig, c: float):
        self.cfg = cfg
        self.c = c
        n = grid.n_points
        self.counts = CountTable.zeros(n)
        # uniform-prior values: delta-quantile = delta, CDF at gamma = gamma
        self._stat = np.full(n, cfg.delta)
        self._cdf_gamma = np.full(n, cfg.gamma)

    def record(self, idx: int, outcomes: np.ndarray) -> None:
        self.counts.p[idx] += int(np.count_nonzero(outcomes))
        self.counts.q[idx] += int(outcomes.size - np.count_nonzero(outcomes))
        dist = betamodel.failure_posterior(self.counts.p[idx], self.counts.q[idx])
        self._stat[idx] = betamodel.beta_quantile(dist, self.cfg.delta)
        self._cdf_gamma[idx] = betamodel.beta_cdf(dist, self.cfg.gamma)

    def safe_set(self) -> SafeSetEstimate:
        return SafeSetEstimate(mask=self._stat <= self.cfg.gamma, statistic=self._stat.copy())

    def select(self, acq_rng: np.random.Generator) -> int:
        mask = self._stat <= self.cfg.gamma
        if bool(np.all(mask)):
            raise betamodel.SafeSetSaturated("all arms are classified safe")
        n_tot = self.counts.n
        scores = self._cdf_gamma + np.where(
            n_tot > 0, betamodel.exploration_bonus(n_tot, self.c), 1.0
        )
        scores[mask] = -np.inf
        return int(np.argmax(scores))


class _RandomBandit(_RawBandit):
    def __init__(self, grid: ParamGrid, cfg: SafetyConfig, c: float):
        super().__init__(grid, cfg, c)
        self._n = grid.n_points

    def select(self, acq_rng: np.random.Generator) -> int:
        return int(acq_rng.integers(self._n))


class _SmoothingBandit:
    """Fixed-length smoothing bandit; the loop-side test uses the CDF at the
    threshold (equivalent to comparing the quantile against it)."""

    def __init__(self, grid: ParamGrid, cfg: SafetyConfig, spec: KernelSpec, c: float):
        self.cfg = cfg
        self.c = c
        self.model = smoothlearn.SmoothingBanditModel(grid, spec, cfg, c)

    def record(self, idx: int, outcomes: np.ndarray) -> None:
        for safe in outcomes:
            self.model.record(idx, bool(safe))

    def safe_set(self) -> SafeSetEstimate:
        return self.model.safe_set()

    def select(self, acq_rng: np.random.Generator) -> int:
        p_hat, q_hat = self.model.smoothed_view()
        cdf_gamma = betainc(1.0 + q_hat, 1.0 + p_hat, self.cfg.gamma)
        mask = cdf_gamma >= self.cfg.delta
        if bool(np.all(mask)):
            raise betamodel.SafeSetSaturated("all arms are classified safe")
        n_tot = p_hat + q_hat
        scores = cdf_gamma + np.where(
            n_tot > 0, betamodel.exploration_bonus(n_tot, self.c), 1.0
        )
        scores[mask] = -np.inf
        return int(np.argmax(scores))


class _LearnedBandit:
    def __init__(self, grid: ParamGrid, cfg: SafetyConfig, method: MethodSpec):
        self.model = smoothlearn.KernelLearningModel(
            grid,
            method.length_grid(grid),
            cfg,
            c=method.c,
            refresh_every=method.refresh_every,
            include_self=method.include_self,
        )

    def record(self, idx: int, outcomes: np.ndarray) -> None:
        for safe in outcomes:
            self.model.record(idx, bool(safe))

    def safe_set(self) -> SafeSetEstimate:
        return self.model.safe_set()

    def safe_indices(self) -> np.ndarray:
        return np.flatnonzero(self.model.safe_mask())

    def select(self, acq_rng: np.random.Generator) -> int:
        return self.model.select()


class _GpMile:
    def __init__(self, grid: ParamGrid, cfg: SafetyConfig, spec: KernelSpec, episodes_per_eval: int):
        self.grid = grid
        self.cfg = cfg
        self.spec = spec
        self.data = gp.GpDataset.empty(grid.n_dims, episodes_per_eval=episodes_per_eval)
        self._post = gp.gp_condition(self.data, grid, spec)
        self._k_grid = kernel_matrix(grid.unit_points, grid.unit_points, spec, truncate=0.0).entries

    def record(self, idx: int, outcomes: np.ndarray) -> None:
        p_hat = 1.0 - float(np.mean(outcomes))
        noise = gp.estimator_noise(p_hat, outcomes.size)
        self.data = self.data.extended(self.grid.points[idx], p_hat, noise)
        self._post = gp.gp_condition(self.data, self.grid, self.spec)

    def safe_set(self) -> SafeSetEstimate:
        return gp.gp_safe_set(self._post, self.cfg)

    def select(self, acq_rng: np.random.Generator) -> int:
        return gp.mile_select(self._post, self.data, self.grid, self.cfg, k_grid=self._k_grid)


def _make_model(method: MethodSpec, grid: ParamGrid, cfg: SafetyConfig):
    spec = KernelSpec(length=method.length)
    if method.kind == "bandit-random":
        return _RandomBandit(grid, cfg, method.c)
    if method.kind == "bandit-dkwucb":
        return _RawBandit(grid, cfg, method.c)
    if method.kind == "smoothing-dkwucb":
        return _SmoothingBandit(grid, cfg, spec, method.c)
    if method.kind == "smoothing-learned":
        return _LearnedBandit(grid, cfg, method)
    if method.kind == "gp-mile":
        return _GpMile(grid, cfg, spec, method.episodes_per_eval)
    raise ValueError(f"unknown method kind {method.kind!r}")


def run_estimation(
    sim_id: str,
    grid: ParamGrid,
    method: MethodSpec,
    cfg: SafetyConfig,
    budget: int,
    seed: int,
    truth: GroundTruth | None = None,
    checkpoint_every: int = 100,
    sim_cfg=None,
) -> tuple[SafeSetEstimate, RunTrace]:
    """Estimate the safe set within an episode budget.

    Loop: simulate at the chosen point, update the method's model, let its
    acquisition pick the next point. Bandit methods consume one episode per
    iteration; the GP method consumes `episodes_per_eval`. The run stops early
    when the acquisition reports that every arm is classified safe. Returns
    the method's robust safe-set estimate and the episode trace.
    """
    unit = method.episodes_per_unit
    if budget < unit:
        raise ValueError(f"budget {budget} is below one evaluation unit ({unit} episodes)")
    if checkpoint_every < 1:
        raise ValueError("checkpoint_every must be >= 1")

    model = _make_model(method, grid, cfg)
    acq_rng = episode_stream(seed, 0, 0, DOMAIN_ACQUISITION).generator()
    idx = int(acq_rng.integers(grid.n_points))

    counters = np.zeros(grid.n_points, dtype=np.int64)
    ep_numbers: list[int] = []
    ep_points: list[int] = []
    ep_outcomes: list[bool] = []
    checkpoints: list[Checkpoint] = []
    consumed = 0
    next_checkpoint = checkpoint_every

    def record_checkpoint() -> None:
        indices = (
            model.safe_indices()
            if hasattr(model, "safe_indices")
            else model.safe_set().indices()
        )
        precision = recall = None
        if truth is not None:
            mask = np.zeros(grid.n_points, dtype=bool)
            mask[indices] = True
            res = evaluate(SafeSetEstimate(mask=mask, statistic=np.zeros(grid.n_points)), truth)
            precision, recall = res.precision, res.recall
        checkpoints.append(
            Checkpoint(episode=consumed, safe_indices=indices, precision=precision, recall=recall)
        )

    while consumed + unit <= budget:
        streams = [
            episode_stream(seed, idx, int(counters[idx]) + k) for k in range(unit)
        ]
        counters[idx] += unit
        try:
            outcomes = sim.episode_batch(sim_id, grid.points[idx], streams, sim_cfg)
        except Exception as exc:
            raise RuntimeError(
                f"simulator {sim_id!r} failed at grid point {idx} "
                f"({grid.points[idx].tolist()}) after {consumed} episodes"
            ) from exc
        for k, safe in enumerate(outcomes):
            ep_numbers.append(consumed + k + 1)
            ep_points.append(idx)
            ep_outcomes.append(bool(safe))
        consumed += unit
        model.record(idx, outcomes)
        if consumed >= next_checkpoint:
            record_checkpoint()
            next_checkpoint += checkpoint_every
        try:
            idx = model.select(acq_rng)
        except betamodel.SafeSetSaturated:
            break

    if not checkpoints or checkpoints[-1].episode != consumed:
        record_checkpoint()

    estimate = model.safe_set()
    trace = RunTrace(
        episode_numbers=np.array(ep_numbers, dtype=np.int64),
        point_indices=np.array(ep_points, dtype=np.int64),
        outcomes=np.array(ep_outcomes, dtype=bool),
        checkpoints=checkpoints,
        total_budget=budget,
    )
    return estimate, trace


def evaluate(estimate: SafeSetEstimate, truth: GroundTruth) -> EvalResult:
    """Precision/recall of an estimated safe set against reference truth.

    Empty estimates have precision 1 by convention; an empty true safe set has
    recall 1.
    """
    if estimate.mask.shape != truth.safe_mask.shape:
        raise ValueError(
            f"grid mismatch: estimate has {estimate.mask.shape[0]} points, "
            f"truth has {truth.safe_mask.shape[0]}"
        )
    est = estimate.mask
    ref = truth.safe_mask
    tp = int(np.count_nonzero(est & ref))
    fp = int(np.count_nonzero(est & ~ref))
    fn = int(np.count_nonzero(~est & ref))
    tn = int(np.count_nonzero(~est & ~ref))
    precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 1.0
    return EvalResult(precision=precision, recall=recall, tp=tp, fp=fp, fn=fn, tn=tn)


def episodes_to_recall(
    trace: RunTrace,
    truth: GroundTruth,
    target_recall: float,
    min_precision: float = 0.0,
) -> int | None:
    """Episode count at the first checkpoint meeting the recall target (and
    precision floor); None when the trace never reaches it."""
    n = truth.safe_mask.shape[0]
    for ck in trace.checkpoints:
        mask = np.zeros(n, dtype=bool)
        mask[np.asarray(ck.safe_indices, dtype=np.int64)] = True
        res = evaluate(SafeSetEstimate(mask=mask, statistic=np.zeros(n)), truth)
        if res.recall >= target_recall and res.precision >= min_precision:
            return ck.episode
    return None
