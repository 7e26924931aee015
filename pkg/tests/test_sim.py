import math

import numpy as np
import pytest

from safesets import RngStream, episode_stream
from safesets.sim import (
    DETECT_MIN_RANGE,
    DaaConfig,
    PendulumConfig,
    StubConfig,
    daa_episode,
    default_config,
    detect_probability,
    episode_batch,
    pendulum_episode,
    simulate,
    simulator_ids,
)


def streams(n, seed=5, point=3, domain=1):
    return [episode_stream(seed, point, k, domain) for k in range(n)]


class TestRegistry:
    def test_ids(self):
        assert set(simulator_ids()) == {"pendulum", "daa", "stub"}

    def test_unknown_id(self):
        with pytest.raises(ValueError, match="unknown simulator"):
            simulate("nope", [0.0], RngStream(0))

    def test_default_configs(self):
        assert isinstance(default_config("pendulum"), PendulumConfig)
        assert isinstance(default_config("daa"), DaaConfig)
        assert isinstance(default_config("stub"), StubConfig)


class TestDeterminism:
    @pytest.mark.parametrize(
        "sim_id,eta",
        [
            ("pendulum", [0.1, 0.1]),
            ("daa", [2000.0, 1.0, 60.0]),
            ("stub", [0.4]),
        ],
    )
    def test_identical_stream_identical_outcome(self, sim_id, eta):
        a = simulate(sim_id, eta, RngStream(seed=9, stream_id=4))
        b = simulate(sim_id, eta, RngStream(seed=9, stream_id=4))
        assert a == b

    @pytest.mark.parametrize(
        "sim_id,eta",
        [
            ("pendulum", [0.12, 0.08]),
            ("daa", [1500.0, 0.9, 45.0]),
            ("stub", [0.5]),
        ],
    )
    def test_single_matches_batch(self, sim_id, eta):
        ss = streams(128)
        batch = episode_batch(sim_id, eta, ss)
        single = np.array([episode_batch(sim_id, eta, [s])[0] for s in ss])
        assert np.array_equal(batch, single)

    def test_distinct_streams_vary(self):
        outcomes = episode_batch("stub", [0.5], streams(200))
        assert 0 < outcomes.sum() < 200

    def test_cursor_matches_fresh_generator(self):
        from safesets.sim import _cursor

        stream = RngStream(seed=123, stream_id=456)
        a = _cursor().seek(stream).standard_normal(32)
        b = stream.generator().standard_normal(32)
        assert np.array_equal(a, b)


class TestPendulum:
    def test_noiseless_from_origin_holds(self):
        cfg = PendulumConfig(theta_init=(0.0, 0.0), omega_init=(0.0, 0.0))
        out = pendulum_episode([0.0, 0.0], cfg, RngStream(1))
        assert out.safe
        assert out.steps == cfg.horizon

    def test_noiseless_from_box_is_safe(self):
        cfg = PendulumConfig()
        safe = episode_batch("pendulum", [0.0, 0.0], streams(10_000), cfg)
        assert 1.0 - safe.mean() <= 0.01

    def test_heavy_noise_fails_often(self):
        cfg = PendulumConfig()
        safe = episode_batch("pendulum", [0.2, 0.2], streams(10_000), cfg)
        assert 1.0 - safe.mean() >= 0.5

    def test_failure_monotone_in_noise(self):
        cfg = PendulumConfig()
        n = 10_000
        base = 1.0 - episode_batch("pendulum", [0.08, 0.08], streams(n), cfg).mean()
        se = 2.0 * math.sqrt(0.25 / n)
        for bump in ([0.12, 0.08], [0.08, 0.12]):
            bumped = 1.0 - episode_batch("pendulum", bump, streams(n), cfg).mean()
            assert bumped >= base - se

    def test_rejects_negative_noise(self):
        with pytest.raises(ValueError):
            pendulum_episode([-0.1, 0.0], PendulumConfig(), RngStream(0))

    def test_trace_detail(self):
        cfg = PendulumConfig()
        out = pendulum_episode([0.05, 0.05], cfg, RngStream(7), keep_trace=True)
        assert out.detail is not None
        assert out.detail["theta"].shape == (cfg.horizon + 1,)
        plain = pendulum_episode([0.05, 0.05], cfg, RngStream(7))
        assert plain.safe == out.safe and plain.steps == out.steps

    def test_failed_episode_reports_step(self):
        cfg = PendulumConfig()
        outcomes = [
            pendulum_episode([0.2, 0.2], cfg, s) for s in streams(50)
        ]
        failed = [o for o in outcomes if not o.safe]
        assert failed
        assert all(0 < o.steps <= cfg.horizon for o in failed)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PendulumConfig(dt=0.0)
        with pytest.raises(ValueError):
            PendulumConfig(torque_limit=-1.0)
        with pytest.raises(ValueError):
            PendulumConfig(theta_init=(0.1, -0.1))


class TestDetectProbability:
    def test_dead_zone(self):
        assert detect_probability(100.0, 2000.0, 1.0) == 0.0
        assert detect_probability(DETECT_MIN_RANGE, 2000.0, 1.0) == 0.0

    def test_midpoint(self):
        assert detect_probability(1000.0, 2000.0, 1.0) == pytest.approx(0.5)

    def test_clamped_above_one(self):
        assert detect_probability(200.0001, 1650.0, 1.15) == 1.0
        assert 1.15 * (1 - 200.0 / 1650.0) == pytest.approx(1.0106, abs=1e-4)

    def test_zero_at_x_intercept(self):
        assert detect_probability(2000.0, 2000.0, 0.9) == 0.0
        assert detect_probability(2500.0, 2000.0, 0.9) == 0.0

    def test_monotone(self):
        rs = np.linspace(201.0, 3500.0, 40)
        vals = [detect_probability(r, 2000.0, 1.0) for r in rs]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
        assert all(
            detect_probability(800.0, 2000.0, y + 0.1) >= detect_probability(800.0, 2000.0, y)
            for y in (0.0, 0.5, 1.0)
        )

    def test_validation(self):
        with pytest.raises(ValueError):
            detect_probability(-1.0, 2000.0, 1.0)
        with pytest.raises(ValueError):
            detect_probability(500.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            detect_probability(500.0, 2000.0, -0.2)


class TestDaa:
    def test_blind_head_on_always_fails(self):
        cfg = DaaConfig(intruder_heading=(math.pi, math.pi), miss_distance_max=1e-9)
        safe = episode_batch("daa", [2000.0, 0.0, 60.0], streams(100), cfg)
        assert not safe.any()

    def test_perfect_perception_is_safe(self):
        safe = episode_batch("daa", [1e7, 1.0, 360.0], streams(10_000), DaaConfig())
        assert 1.0 - safe.mean() <= 0.05

    def test_failure_monotone_in_fov(self):
        n = 4000
        se = 2.0 * math.sqrt(0.25 / n)
        rates = [
            1.0 - episode_batch("daa", [2000.0, 1.0, fov], streams(n), DaaConfig()).mean()
            for fov in (30.0, 60.0, 100.0)
        ]
        assert rates[1] <= rates[0] + se
        assert rates[2] <= rates[1] + se

    def test_failure_trends_on_slice(self):
        n = 4000
        se = 2.0 * math.sqrt(0.25 / n)
        low_y = 1.0 - episode_batch("daa", [2000.0, 0.8, 60.0], streams(n), DaaConfig()).mean()
        high_y = 1.0 - episode_batch("daa", [2000.0, 1.2, 60.0], streams(n), DaaConfig()).mean()
        assert high_y <= low_y + se
        small_x = 1.0 - episode_batch("daa", [1000.0, 1.0, 60.0], streams(n), DaaConfig()).mean()
        big_x = 1.0 - episode_batch("daa", [3000.0, 1.0, 60.0], streams(n), DaaConfig()).mean()
        assert big_x <= small_x + se

    def test_eta_validation(self):
        cfg = DaaConfig()
        with pytest.raises(ValueError):
            daa_episode([0.0, 1.0, 60.0], cfg, RngStream(0))
        with pytest.raises(ValueError):
            daa_episode([2000.0, -0.5, 60.0], cfg, RngStream(0))
        with pytest.raises(ValueError):
            daa_episode([2000.0, 1.0, 0.0], cfg, RngStream(0))
        with pytest.raises(ValueError):
            daa_episode([2000.0, 1.0, 361.0], cfg, RngStream(0))

    def test_impossible_geometry_raises(self):
        cfg = DaaConfig(bearing_max_deg=0.0)
        with pytest.raises(RuntimeError, match="rejected"):
            daa_episode([2000.0, 1.0, 60.0], cfg, RngStream(3))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DaaConfig(nmac_radius=0.0)
        with pytest.raises(ValueError):
            DaaConfig(step=-1.0)


class TestStub:
    def test_first_coordinate_is_failure_probability(self):
        n = 20_000
        safe = episode_batch("stub", [0.3], streams(n))
        assert 1.0 - safe.mean() == pytest.approx(0.3, abs=0.02)

    def test_extremes(self):
        assert episode_batch("stub", [1.0], streams(50)).sum() == 0
        assert episode_batch("stub", [0.0], streams(50)).sum() == 50

    def test_outcome_fields(self):
        out = simulate("stub", [0.5], RngStream(2))
        assert out.steps == 1
        assert isinstance(out.safe, bool)
