import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import betainc, gammaln

from safesets import CountTable, SafetyConfig, build_grid
from safesets.betamodel import BetaDist, bandit_safe_set, beta_quantile, dkwucb_select
from safesets.kernel import KernelBank, KernelSpec, wsqe
from safesets.smoothlearn import (
    DiscreteDist,
    KernelLearningModel,
    LengthGridSpec,
    SmoothingBanditModel,
    discrete_quantile,
    length_likelihood,
    length_posterior,
    length_posterior_all,
    marginal_failure_posterior,
    smoothed_dkwucb_select,
    smoothed_state,
    smoothing_bandit_safe_set,
)

CFG = SafetyConfig(gamma=0.1, delta=0.95)


def compound_likelihood_quadrature(p, q, p_hat, q_hat):
    """Numerical integral of Binomial(p | theta, p+q) * Beta(theta | 1+p_hat,
    1+q_hat) over theta, in log-space for stability."""
    n = p + q
    log_binom = gammaln(n + 1) - gammaln(p + 1) - gammaln(q + 1)
    a, b = 1.0 + p_hat, 1.0 + q_hat
    log_beta_norm = gammaln(a + b) - gammaln(a) - gammaln(b)

    def integrand(theta):
        if theta <= 0.0 or theta >= 1.0:
            return 0.0
        log_val = (
            log_binom
            + p * math.log(theta)
            + q * math.log1p(-theta)
            + log_beta_norm
            + (a - 1.0) * math.log(theta)
            + (b - 1.0) * math.log1p(-theta)
        )
        return math.exp(log_val)

    # breakpoint at the integrand mode so the adaptive rule resolves the peak
    peak = (p + a - 1.0) / max(p + a - 1.0 + q + b - 1.0, 1e-9)
    val, _ = quad(integrand, 0.0, 1.0, limit=400, points=[peak], epsabs=0.0, epsrel=1e-10)
    return val


class TestLengthLikelihood:
    def test_no_local_observations_is_one(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            ph, qh = rng.random() * 40, rng.random() * 40
            assert length_likelihood(0, 0, ph, qh) == pytest.approx(1.0, abs=1e-12)

    def test_matches_quadrature(self):
        rng = np.random.default_rng(32)
        for _ in range(60):
            p = int(rng.integers(0, 21))
            q = int(rng.integers(0, 21))
            ph = float(rng.random() * 20)
            qh = float(rng.random() * 20)
            closed = length_likelihood(p, q, ph, qh)
            numeric = compound_likelihood_quadrature(p, q, ph, qh)
            assert closed == pytest.approx(numeric, rel=1e-6)

    def test_prefers_matching_smoothing(self):
        # own counts balanced at 0.5: smoothing concentrated near 0.5 wins
        concentrated = length_likelihood(5, 5, 50.0, 50.0)
        skewed = length_likelihood(5, 5, 95.0, 5.0)
        assert concentrated > skewed

    def test_vectorized(self):
        p = np.array([0.0, 5.0])
        out = length_likelihood(p, p, p, p)
        assert out.shape == (2,)
        assert out[0] == pytest.approx(1.0)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            length_likelihood(-1, 0, 0, 0)


class TestSmoothedState:
    def test_identity_limit(self):
        grid = build_grid([("a", 0, 1, 6)])
        counts = CountTable(np.arange(6.0), np.ones(6))
        out = smoothed_state(counts, grid, KernelSpec(length=1e-7))
        assert np.allclose(out.p, counts.p, atol=1e-9)

    def test_single_observation_spreads_kernel_row(self):
        grid = build_grid([("a", 0, 1, 5)])
        p = np.zeros(5)
        p[2] = 1.0
        counts = CountTable(p, np.zeros(5))
        spec = KernelSpec(length=0.4)
        out = smoothed_state(counts, grid, spec)
        expected = np.array([wsqe(grid.unit_points[i], grid.unit_points[2], spec) for i in range(5)])
        assert np.allclose(out.p, expected, atol=1e-12)

    def test_neighbor_evidence_is_discounted(self):
        grid = build_grid([("a", 0, 1, 5)])
        p = np.zeros(5)
        p[0] = 10.0
        out = smoothed_state(CountTable(p, np.zeros(5)), grid, KernelSpec(length=0.3))
        assert 0.0 < out.p[1] < 10.0

    def test_rejects_smoothed_input(self):
        grid = build_grid([("a", 0, 1, 3)])
        counts = CountTable(np.ones(3) * 0.5, np.zeros(3), raw=False)
        with pytest.raises(ValueError):
            smoothed_state(counts, grid, KernelSpec(length=0.1))


class TestSmoothingBanditSafeSet:
    def test_vanishing_length_reduces_to_raw(self):
        rng = np.random.default_rng(33)
        grid = build_grid([("a", 0, 1, 9)])
        counts = CountTable(np.floor(rng.random(9) * 80), np.floor(rng.random(9) * 3))
        smoothed = smoothing_bandit_safe_set(counts, grid, KernelSpec(length=1e-7), CFG)
        raw = bandit_safe_set(counts, CFG)
        assert np.array_equal(smoothed.mask, raw.mask)
        assert np.allclose(smoothed.statistic, raw.statistic, atol=1e-9)

    def test_center_classified_from_neighbors(self):
        # two tight neighbors sharing ~0.9 of their counts with the center
        length = math.sqrt(0.25 / (2.0 * math.log(1.0 / 0.9)))
        grid = build_grid([("a", 0, 1, 3)])
        counts = CountTable(np.array([50.0, 0.0, 50.0]), np.zeros(3))
        est = smoothing_bandit_safe_set(counts, grid, KernelSpec(length=length), CFG)
        k = wsqe(grid.unit_points[0], grid.unit_points[1], KernelSpec(length=length))
        assert k == pytest.approx(0.9, abs=1e-12)
        expected_quantile = beta_quantile(BetaDist(1.0, 1.0 + 90.0), 0.95)
        assert expected_quantile == pytest.approx(1 - 0.05 ** (1 / 91), abs=1e-9)
        assert est.mask[1]
        assert est.statistic[1] == pytest.approx(expected_quantile, abs=1e-9)

    def test_isolated_point_stays_unsafe(self):
        grid = build_grid([("a", 0, 1, 21)])
        p = np.zeros(21)
        p[0] = 500.0
        est = smoothing_bandit_safe_set(
            CountTable(p, np.zeros(21)), grid, KernelSpec(length=0.05), CFG
        )
        assert not est.mask[-1]  # far end gets essentially no evidence


class TestSmoothedDkwucb:
    def test_all_zero_counts_picks_lowest(self):
        grid = build_grid([("a", 0, 1, 7)])
        counts = CountTable.zeros(7)
        safe = smoothing_bandit_safe_set(counts, grid, KernelSpec(length=0.2), CFG)
        assert smoothed_dkwucb_select(counts, grid, KernelSpec(length=0.2), safe, CFG, 1.0) == 0

    def test_vanishing_length_matches_raw_selection(self):
        rng = np.random.default_rng(34)
        grid = build_grid([("a", 0, 1, 8)])
        counts = CountTable(np.floor(rng.random(8) * 15), np.floor(rng.random(8) * 15))
        spec = KernelSpec(length=1e-7)
        safe = smoothing_bandit_safe_set(counts, grid, spec, CFG)
        raw_safe = bandit_safe_set(counts, CFG)
        assert smoothed_dkwucb_select(counts, grid, spec, safe, CFG, 1.0) == dkwucb_select(
            counts, raw_safe, CFG, 1.0
        )

    def test_bonus_shrinks_near_data(self):
        grid = build_grid([("a", 0, 1, 9)])
        p = np.zeros(9)
        p[4] = 10.0
        counts = CountTable(p, np.zeros(9))
        sm = smoothed_state(counts, grid, KernelSpec(length=0.2))
        assert sm.n[3] > sm.n[0]  # effective episode totals rise near data


class TestLengthPosterior:
    def test_no_data_returns_prior(self):
        grid = build_grid([("a", 0, 1, 7)])
        lgrid = LengthGridSpec(bins=20, lo=0.1, hi=1.0)
        prior = np.linspace(1.0, 3.0, 20)
        post = length_posterior(CountTable.zeros(7), grid, 3, lgrid, prior=prior)
        assert np.allclose(post, prior / prior.sum(), atol=1e-12)

    def test_agreeing_neighbors_favor_longer_lengths(self):
        grid = build_grid([("a", 0, 1, 11)])
        lgrid = LengthGridSpec(bins=30, lo=0.05, hi=1.0)
        counts = CountTable(np.full(11, 6.0), np.full(11, 6.0))
        post = length_posterior(counts, grid, 5, lgrid)
        lengths = lgrid.values()
        prior_mean = lengths.mean() * 0 + lengths @ lgrid.uniform_prior()
        assert lengths @ post > prior_mean

    def test_cliff_favors_shorter_lengths(self):
        grid = build_grid([("a", 0, 1, 11)])
        lgrid = LengthGridSpec(bins=30, lo=0.05, hi=1.0)
        p = np.where(np.arange(11) < 6, 40.0, 0.0)
        q = np.where(np.arange(11) < 6, 0.0, 40.0)
        counts = CountTable(p, q)
        lengths = lgrid.values()
        post_cliff = length_posterior(counts, grid, 5, lgrid)  # right at the edge
        assert lengths @ post_cliff < lengths @ lgrid.uniform_prior()

    def test_prior_scale_invariance(self):
        grid = build_grid([("a", 0, 1, 5)])
        lgrid = LengthGridSpec(bins=10, lo=0.1, hi=1.0)
        counts = CountTable(np.array([3.0, 1.0, 4.0, 0.0, 2.0]), np.ones(5))
        a = length_posterior(counts, grid, 2, lgrid, prior=np.full(10, 0.1))
        b = length_posterior(counts, grid, 2, lgrid, prior=np.full(10, 7.0))
        assert np.allclose(a, b, atol=1e-12)

    def test_all_rows_consistent_with_single_point(self):
        rng = np.random.default_rng(35)
        grid = build_grid([("a", 0, 1, 4), ("b", 0, 1, 3)])
        lgrid = LengthGridSpec(bins=12, lo=0.2, hi=2.0)
        counts = CountTable(np.floor(rng.random(12) * 10), np.floor(rng.random(12) * 10))
        allp = length_posterior_all(counts, grid, lgrid)
        assert np.allclose(allp.probs.sum(axis=1), 1.0, atol=1e-9)
        for idx in (0, 5, 11):
            row = length_posterior(counts, grid, idx, lgrid)
            assert np.allclose(allp.probs[idx], row, atol=1e-10)

    def test_include_self_differs(self):
        # own counts disagree with the neighbor's, so keeping the self term
        # changes which lengths the likelihood favors
        grid = build_grid([("a", 0, 1, 5)])
        lgrid = LengthGridSpec(bins=10, lo=0.1, hi=1.0)
        p = np.array([0.0, 0.0, 30.0, 0.0, 0.0])
        q = np.array([0.0, 30.0, 0.0, 0.0, 0.0])
        counts = CountTable(p, q)
        loo = length_posterior(counts, grid, 2, lgrid, include_self=False)
        with_self = length_posterior(counts, grid, 2, lgrid, include_self=True)
        assert not np.allclose(loo, with_self)


class TestMarginalFailurePosterior:
    def test_rows_normalized(self):
        rng = np.random.default_rng(36)
        grid = build_grid([("a", 0, 1, 7)])
        lgrid = LengthGridSpec(bins=15, lo=0.1, hi=1.0)
        counts = CountTable(np.floor(rng.random(7) * 30), np.floor(rng.random(7) * 5))
        dist = marginal_failure_posterior(counts, grid, 3, lgrid)
        assert dist.probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(dist.probs >= 0)

    def test_point_mass_reduces_to_smoothed_beta(self):
        grid = build_grid([("a", 0, 1, 5)])
        lgrid = LengthGridSpec(bins=8, lo=0.2, hi=0.9)
        prior = np.zeros(8)
        prior[3] = 1.0
        rng = np.random.default_rng(37)
        counts = CountTable(np.floor(rng.random(5) * 40), np.floor(rng.random(5) * 6))
        dist = marginal_failure_posterior(counts, grid, 2, lgrid, prior=prior, support_bins=201)
        bank = KernelBank(grid, lgrid.values())
        col = bank.column_all(2)[3]
        p_hat, q_hat = col @ counts.p, col @ counts.q
        exact = beta_quantile(BetaDist(1.0 + q_hat, 1.0 + p_hat), 0.95)
        approx = discrete_quantile(dist, 0.95)
        assert abs(approx - exact) <= 1.0 / 200.0

    def test_two_component_mixture_quantile(self):
        # equal-weight mixture of Beta(1,101) and Beta(1,11) failure dists
        support = np.linspace(0.0, 1.0, 201)
        pdf = 0.5 * 101.0 * (1.0 - support) ** 100 + 0.5 * 11.0 * (1.0 - support) ** 10
        pdf[0] *= 0.5
        pdf[-1] *= 0.5
        dist = DiscreteDist(support=support, probs=pdf / pdf.sum())

        def mixture_cdf(x):
            return 0.5 * betainc(1.0, 101.0, x) + 0.5 * betainc(1.0, 11.0, x)

        lo, hi = 0.0, 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if mixture_cdf(mid) >= 0.95:
                hi = mid
            else:
                lo = mid
        exact = 0.5 * (lo + hi)
        assert abs(discrete_quantile(dist, 0.95) - exact) <= 1.0 / 200.0

    def test_tiny_length_prior_matches_raw_quantile(self):
        grid = build_grid([("a", 0, 1, 9)])
        lgrid = LengthGridSpec(bins=10, lo=1e-4, hi=1e-3)
        rng = np.random.default_rng(38)
        counts = CountTable(np.floor(rng.random(9) * 50), np.floor(rng.random(9) * 8))
        prior = np.zeros(10)
        prior[0] = 1.0
        for idx in (0, 4, 8):
            dist = marginal_failure_posterior(counts, grid, idx, lgrid, prior=prior)
            raw = beta_quantile(
                BetaDist(1.0 + counts.q[idx], 1.0 + counts.p[idx]), 0.95
            )
            assert abs(discrete_quantile(dist, 0.95) - raw) <= 1.0 / 200.0

    def test_validates_support_bins(self):
        grid = build_grid([("a", 0, 1, 3)])
        lgrid = LengthGridSpec(bins=5, lo=0.1, hi=1.0)
        with pytest.raises(ValueError):
            marginal_failure_posterior(CountTable.zeros(3), grid, 0, lgrid, support_bins=5)


class TestSmoothingBanditModel:
    def test_incremental_matches_batch(self):
        rng = np.random.default_rng(39)
        grid = build_grid([("a", 0, 1, 6), ("b", 0, 1, 4)])
        spec = KernelSpec(length=0.15)
        model = SmoothingBanditModel(grid, spec, CFG)
        for _ in range(200):
            model.record(int(rng.integers(24)), bool(rng.random() < 0.7))
        expected = smoothed_state(model.counts, grid, spec)
        got = model.smoothed()
        assert np.allclose(got.p, expected.p, atol=1e-9)
        assert np.allclose(got.q, expected.q, atol=1e-9)
        est = model.safe_set()
        ref = smoothing_bandit_safe_set(model.counts, grid, spec, CFG)
        assert np.array_equal(est.mask, ref.mask)


class TestKernelLearningModel:
    def _filled_model(self, seed=40, episodes=150, mask_every=1):
        rng = np.random.default_rng(seed)
        grid = build_grid([("a", 0, 1, 7), ("b", 0, 1, 5)])
        lgrid = LengthGridSpec(bins=12, lo=0.15, hi=1.5)
        model = KernelLearningModel(grid, lgrid, CFG, refresh_every=40, mask_every=mask_every)
        for _ in range(episodes):
            idx = int(rng.integers(grid.n_points))
            model.record(idx, bool(rng.random() < 0.8))
        return grid, lgrid, model

    def test_incremental_counts_match_refresh(self):
        grid, lgrid, model = self._filled_model()
        bank = KernelBank(grid, lgrid.values())
        assert np.allclose(model._p_hat, bank.matvec_all(model.counts.p), atol=1e-8)
        assert np.allclose(model._q_hat, bank.matvec_all(model.counts.q), atol=1e-8)

    def test_expected_counts_weighting(self):
        grid, lgrid, model = self._filled_model()
        expected = model.expected_counts()
        probs = model.length_posteriors.probs
        manual_p = np.array(
            [probs[i] @ model._p_hat[:, i] for i in range(grid.n_points)]
        )
        assert np.allclose(expected.p, manual_p, atol=1e-10)

    def test_posteriors_match_batch_function(self):
        grid, lgrid, model = self._filled_model(episodes=160)  # multiple of 40: fresh
        ref = length_posterior_all(model.counts, grid, lgrid)
        assert np.allclose(model.length_posteriors.probs, ref.probs, atol=1e-9)

    def test_safe_mask_matches_mixture_cdf(self):
        grid, lgrid, model = self._filled_model()
        probs = model.length_posteriors.probs
        cdf = np.array(
            [
                probs[i] @ betainc(1.0 + model._q_hat[:, i], 1.0 + model._p_hat[:, i], CFG.gamma)
                for i in range(grid.n_points)
            ]
        )
        assert np.array_equal(model.safe_mask(), cdf >= CFG.delta)

    def test_safe_set_statistic_consistent_with_mask(self):
        grid, lgrid, model = self._filled_model()
        est = model.safe_set()
        assert np.array_equal(est.mask, est.statistic <= CFG.gamma + 1e-9)

    def test_select_avoids_fresh_safe_arms(self):
        grid = build_grid([("a", 0, 1, 7), ("b", 0, 1, 5)])
        lgrid = LengthGridSpec(bins=12, lo=0.15, hi=1.5)
        model = KernelLearningModel(grid, lgrid, CFG, refresh_every=40, mask_every=1)
        for _ in range(120):
            model.record(17, True)  # a block of confident successes
        mask = model.safe_mask()
        assert mask.any() and not mask.all()
        for _ in range(5):
            assert not mask[model.select()]
