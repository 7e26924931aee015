"""Black-box episode simulators behind one dispatch interface.

Three simulators share the contract `(eta, config, stream) -> outcome`:

* ``pendulum``: an inverted pendulum stabilized by a saturated PD controller
  that only sees noisy state estimates; eta = (angle-noise std, rate-noise
  std). An episode fails if the angle ever leaves the +-pi/4 band.
* ``daa``: a planar near-collision encounter between two constant-speed
  aircraft; eta = (detection x-intercept, detection y-intercept, horizontal
  field of view in degrees). Once the intruder is detected the ownship turns
  away at a fixed rate; an episode fails if the miss distance drops below the
  near-mid-air-collision radius.
* ``stub``: a Bernoulli coin whose failure probability is the first
  coordinate of eta; useful for driver and CLI tests.

Every episode is a pure function of (config, eta, stream): the stream is
consumed in a fixed order (batch and single-episode paths share the same
code), so identical streams reproduce identical outcomes on any platform or
thread schedule.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import RngStream

__all__ = [
    "EpisodeOutcome",
    "PendulumConfig",
    "DaaConfig",
    "StubConfig",
    "detect_probability",
    "pendulum_episode",
    "daa_episode",
    "simulate",
    "episode_batch",
    "default_config",
    "simulator_ids",
    "DETECT_MIN_RANGE",
]

# Detection dead zone: intruders closer than this are never detected (they
# subtend the whole image; the tracking pipeline has lost them).
DETECT_MIN_RANGE = 200.0

_ENCOUNTER_ATTEMPTS = 40


@dataclass(frozen=True)
class EpisodeOutcome:
    """Result of one simulated episode; deterministic given (eta, stream)."""

    safe: bool
    steps: int
    detail: dict | None = None


@dataclass(frozen=True)
class PendulumConfig:
    """Pendulum plant, saturated PD controller, and initial-state box.

    Gains and the initial box are calibrated so that the noiseless system is
    safe from anywhere in the box while perception noise up to 0.2 (rad,
    rad/s) drives the failure probability well past 0.5.
    """

    dt: float = 0.05
    horizon: int = 300
    gravity: float = 9.81
    length: float = 1.0
    mass: float = 1.0
    torque_limit: float = 2.0
    k_p: float = 25.0
    k_d: float = 25.0
    theta_init: tuple[float, float] = (-0.05, 0.05)
    omega_init: tuple[float, float] = (-0.1, 0.1)
    fail_angle: float = math.pi / 4

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.torque_limit <= 0:
            raise ValueError("torque_limit must be positive")
        if self.length <= 0 or self.mass <= 0 or self.gravity < 0:
            raise ValueError("plant constants must be positive")
        if self.theta_init[0] > self.theta_init[1] or self.omega_init[0] > self.omega_init[1]:
            raise ValueError("initial-state box bounds are inverted")


@dataclass(frozen=True)
class DaaConfig:
    """Planar encounter generator and avoidance maneuver parameters.

    Encounters are sampled so the unmitigated miss distance concentrates below
    the NMAC radius and the intruder approaches from a frontal cone; the
    ownship flies at constant speed along +x until detection, then turns away
    at a fixed rate up to a maximum heading change.
    """

    nmac_radius: float = 150.0
    step: float = 1.0
    horizon: int = 60
    own_speed: float = 50.0
    intruder_speed: tuple[float, float] = (40.0, 60.0)
    intruder_heading: tuple[float, float] = (0.0, 2.0 * math.pi)
    t_cpa: tuple[float, float] = (20.0, 40.0)
    miss_distance_max: float = 300.0
    bearing_max_deg: float = 45.0
    min_initial_range: float = 800.0
    min_closure: float = 10.0
    turn_rate_deg: float = 4.0
    max_turn_deg: float = 90.0

    def __post_init__(self) -> None:
        if self.nmac_radius <= 0:
            raise ValueError("nmac_radius must be positive")
        if self.step <= 0 or self.horizon < 1:
            raise ValueError("step and horizon must be positive")
        if self.own_speed <= 0:
            raise ValueError("own_speed must be positive")


@dataclass(frozen=True)
class StubConfig:
    """No knobs: the stub's failure probability is eta's first coordinate."""


def detect_probability(r: float, x0: float, y0: float) -> float:
    """Probability of detecting an intruder at range r (meters).

    Zero inside the dead zone, then a line from the y-intercept y0 dropping to
    zero at the x-intercept x0, clamped into [0, 1].
    """
    if r < 0:
        raise ValueError("range must be non-negative")
    if x0 <= 0:
        raise ValueError("x-intercept must be positive")
    if y0 < 0:
        raise ValueError("y-intercept must be non-negative")
    if r <= DETECT_MIN_RANGE:
        return 0.0
    return float(np.clip(y0 - (y0 / x0) * r, 0.0, 1.0))


class _StreamCursor:
    """Reusable Philox generator that seeks to a stream's key without paying
    bit-generator construction cost per episode. Draw-for-draw identical to
    RngStream.generator()."""

    def __init__(self) -> None:
        self._bg = np.random.Philox(key=np.zeros(2, dtype=np.uint64))
        self.gen = np.random.Generator(self._bg)
        self._state = self._bg.state

    def seek(self, stream: RngStream) -> np.random.Generator:
        st = self._state
        st["state"]["key"][:] = (stream.seed, stream.stream_id)
        st["state"]["counter"][:] = 0
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bg.state = st
        return self.gen


_tls = threading.local()


def _cursor() -> _StreamCursor:
    cur = getattr(_tls, "cursor", None)
    if cur is None:
        cur = _StreamCursor()
        _tls.cursor = cur
    return cur


# ---------------------------------------------------------------------------
# pendulum
# ---------------------------------------------------------------------------

def _pendulum_single(
    eta: np.ndarray, cfg: PendulumConfig, stream: RngStream
) -> tuple[np.ndarray, np.ndarray]:
    """Scalar fast path; draw order and arithmetic match the batch path
    bit-for-bit (covered by a regression test)."""
    sigma_theta, sigma_omega = float(eta[0]), float(eta[1])
    if sigma_theta < 0 or sigma_omega < 0:
        raise ValueError("noise standard deviations must be non-negative")
    g = _cursor().seek(stream)
    init = g.uniform(
        [cfg.theta_init[0], cfg.omega_init[0]], [cfg.theta_init[1], cfg.omega_init[1]]
    )
    theta, omega = float(init[0]), float(init[1])
    noise = g.standard_normal((cfg.horizon, 2)).tolist()
    grav = cfg.gravity / cfg.length
    inertia = cfg.mass * cfg.length**2
    limit = cfg.torque_limit
    fail = cfg.fail_angle
    dt, k_p, k_d = cfg.dt, cfg.k_p, cfg.k_d
    safe = abs(theta) < fail
    steps = 0 if not safe else cfg.horizon
    for t in range(cfg.horizon):
        e_theta, e_omega = noise[t]
        torque = -k_p * (theta + sigma_theta * e_theta) - k_d * (omega + sigma_omega * e_omega)
        if torque > limit:
            torque = limit
        elif torque < -limit:
            torque = -limit
        omega = omega + dt * (grav * math.sin(theta) + torque / inertia)
        theta = theta + dt * omega
        if safe and abs(theta) >= fail:
            safe = False
            steps = t + 1
    if not (math.isfinite(theta) and math.isfinite(omega)):
        safe = False
    return np.array([safe]), np.array([steps], dtype=int)


def _pendulum_batch(
    eta: np.ndarray, cfg: PendulumConfig, streams: Sequence[RngStream]
) -> tuple[np.ndarray, np.ndarray]:
    if len(streams) == 1:
        return _pendulum_single(eta, cfg, streams[0])
    sigma_theta, sigma_omega = float(eta[0]), float(eta[1])
    if sigma_theta < 0 or sigma_omega < 0:
        raise ValueError("noise standard deviations must be non-negative")
    n = len(streams)
    horizon = cfg.horizon
    cursor = _cursor()
    theta = np.empty(n)
    omega = np.empty(n)
    noise = np.empty((n, horizon, 2))
    lo = np.array([cfg.theta_init[0], cfg.omega_init[0]])
    hi = np.array([cfg.theta_init[1], cfg.omega_init[1]])
    for i, stream in enumerate(streams):
        g = cursor.seek(stream)
        init = g.uniform(lo, hi)
        theta[i], omega[i] = init[0], init[1]
        noise[i] = g.standard_normal((horizon, 2))

    grav = cfg.gravity / cfg.length
    inertia = cfg.mass * cfg.length**2
    limit = cfg.torque_limit
    fail = cfg.fail_angle
    steps = np.full(n, horizon, dtype=int)
    alive = np.abs(theta) < fail
    steps[~alive] = 0
    for t in range(horizon):
        theta_hat = theta + sigma_theta * noise[:, t, 0]
        omega_hat = omega + sigma_omega * noise[:, t, 1]
        torque = np.clip(-cfg.k_p * theta_hat - cfg.k_d * omega_hat, -limit, limit)
        omega = omega + cfg.dt * (grav * np.sin(theta) + torque / inertia)
        theta = theta + cfg.dt * omega
        violated = alive & (np.abs(theta) >= fail)
        steps[violated] = t + 1
        alive &= ~violated
    bad = ~np.isfinite(theta) | ~np.isfinite(omega)
    alive &= ~bad
    return alive, steps


def pendulum_episode(
    eta: np.ndarray, cfg: PendulumConfig, rng: RngStream, keep_trace: bool = False
) -> EpisodeOutcome:
    """One pendulum episode; safe iff the angle stays inside the band."""
    if keep_trace:
        return _pendulum_traced(eta, cfg, rng)
    safe, steps = _pendulum_batch(np.asarray(eta, dtype=float), cfg, [rng])
    return EpisodeOutcome(safe=bool(safe[0]), steps=int(steps[0]))


def _pendulum_traced(eta: np.ndarray, cfg: PendulumConfig, rng: RngStream) -> EpisodeOutcome:
    """Scalar path that keeps the per-step trace; draw order matches the batch."""
    sigma_theta, sigma_omega = float(eta[0]), float(eta[1])
    g = rng.generator()
    init = g.uniform(
        [cfg.theta_init[0], cfg.omega_init[0]], [cfg.theta_init[1], cfg.omega_init[1]]
    )
    theta, omega = float(init[0]), float(init[1])
    noise = g.standard_normal((cfg.horizon, 2))
    grav = cfg.gravity / cfg.length
    inertia = cfg.mass * cfg.length**2
    thetas, omegas, torques = [theta], [omega], []
    safe, steps = True, cfg.horizon
    if abs(theta) >= cfg.fail_angle:
        safe, steps = False, 0
    for t in range(cfg.horizon):
        torque = float(
            np.clip(
                -cfg.k_p * (theta + sigma_theta * noise[t, 0])
                - cfg.k_d * (omega + sigma_omega * noise[t, 1]),
                -cfg.torque_limit,
                cfg.torque_limit,
            )
        )
        omega += cfg.dt * (grav * math.sin(theta) + torque / inertia)
        theta += cfg.dt * omega
        thetas.append(theta)
        omegas.append(omega)
        torques.append(torque)
        if safe and abs(theta) >= cfg.fail_angle:
            safe, steps = False, t + 1
    if not (math.isfinite(theta) and math.isfinite(omega)):
        safe = False
    detail = {
        "theta": np.array(thetas),
        "omega": np.array(omegas),
        "torque": np.array(torques),
    }
    return EpisodeOutcome(safe=safe, steps=steps, detail=detail)


# ---------------------------------------------------------------------------
# collision avoidance
# ---------------------------------------------------------------------------

def _sample_encounters(
    cfg: DaaConfig, streams: Sequence[RngStream]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Initial relative positions, intruder velocities, and the per-step
    detection uniforms for every episode.

    Each episode burns a fixed block of uniforms (attempt grid plus detection
    draws) from its own stream, so the batch layout never changes outcomes.
    """
    n = len(streams)
    cursor = _cursor()
    blocks = np.empty((n, _ENCOUNTER_ATTEMPTS, 5))
    u_detect = np.empty((n, cfg.horizon))
    for i, stream in enumerate(streams):
        g = cursor.seek(stream)
        blocks[i] = g.random((_ENCOUNTER_ATTEMPTS, 5))
        u_detect[i] = g.random(cfg.horizon)

    h_lo, h_hi = cfg.intruder_heading
    psi = h_lo + (h_hi - h_lo) * blocks[:, :, 0]
    v_int = cfg.intruder_speed[0] + (cfg.intruder_speed[1] - cfg.intruder_speed[0]) * blocks[:, :, 1]
    t_cpa = cfg.t_cpa[0] + (cfg.t_cpa[1] - cfg.t_cpa[0]) * blocks[:, :, 2]
    miss = cfg.miss_distance_max * blocks[:, :, 3]
    side = np.where(blocks[:, :, 4] < 0.5, 1.0, -1.0)

    wx = v_int * np.cos(psi) - cfg.own_speed
    wy = v_int * np.sin(psi)
    wn = np.sqrt(wx * wx + wy * wy)
    ok_closure = wn >= cfg.min_closure
    wn_safe = np.where(ok_closure, wn, 1.0)
    # unit normal to the relative track; the signed miss vector at CPA
    nx = side * (-wy / wn_safe)
    ny = side * (wx / wn_safe)
    r0x = miss * nx - wx * t_cpa
    r0y = miss * ny - wy * t_cpa
    rng0 = np.sqrt(r0x * r0x + r0y * r0y)
    bearing = np.arctan2(r0y, r0x)
    ok = (
        ok_closure
        & (rng0 >= cfg.min_initial_range)
        & (np.abs(bearing) <= math.radians(cfg.bearing_max_deg) + 1e-12)
    )
    if not np.all(np.any(ok, axis=1)):
        raise RuntimeError(
            f"encounter sampler rejected {_ENCOUNTER_ATTEMPTS} consecutive attempts; "
            "the geometry configuration is too restrictive"
        )
    first = np.argmax(ok, axis=1)
    rows = np.arange(n)
    rel0 = np.stack([r0x[rows, first], r0y[rows, first]], axis=1)
    vel_int = np.stack(
        [
            v_int[rows, first] * np.cos(psi[rows, first]),
            v_int[rows, first] * np.sin(psi[rows, first]),
        ],
        axis=1,
    )
    return rel0, vel_int, u_detect


def _check_daa_eta(eta: np.ndarray) -> tuple[float, float, float]:
    x0, y0, hfov = float(eta[0]), float(eta[1]), float(eta[2])
    if x0 <= 0:
        raise ValueError("detection x-intercept must be positive")
    if y0 < 0:
        raise ValueError("detection y-intercept must be non-negative")
    if not (0.0 < hfov <= 360.0):
        raise ValueError("horizontal field of view must be in (0, 360] degrees")
    return x0, y0, hfov


def _daa_single(
    eta: np.ndarray, cfg: DaaConfig, stream: RngStream
) -> tuple[np.ndarray, np.ndarray]:
    """Scalar fast path; draws and arithmetic mirror the batch path
    bit-for-bit (covered by a regression test)."""
    x0, y0, hfov = _check_daa_eta(eta)
    g = _cursor().seek(stream)
    blocks = g.random((_ENCOUNTER_ATTEMPTS, 5)).tolist()
    u_detect = g.random(cfg.horizon).tolist()

    h_lo, h_hi = cfg.intruder_heading
    v_lo, v_hi = cfg.intruder_speed
    t_lo, t_hi = cfg.t_cpa
    bearing_cap = math.radians(cfg.bearing_max_deg) + 1e-12
    chosen = None
    for row in blocks:
        psi = h_lo + (h_hi - h_lo) * row[0]
        v_int = v_lo + (v_hi - v_lo) * row[1]
        t_cpa = t_lo + (t_hi - t_lo) * row[2]
        miss = cfg.miss_distance_max * row[3]
        side = 1.0 if row[4] < 0.5 else -1.0
        cos_psi = math.cos(psi)
        sin_psi = math.sin(psi)
        wx = v_int * cos_psi - cfg.own_speed
        wy = v_int * sin_psi
        wn = math.sqrt(wx * wx + wy * wy)
        if not wn >= cfg.min_closure:
            continue
        nx = side * (-wy / wn)
        ny = side * (wx / wn)
        r0x = miss * nx - wx * t_cpa
        r0y = miss * ny - wy * t_cpa
        rng0 = math.sqrt(r0x * r0x + r0y * r0y)
        bearing = float(np.arctan2(r0y, r0x))
        if rng0 >= cfg.min_initial_range and abs(bearing) <= bearing_cap:
            chosen = (r0x, r0y, v_int * cos_psi, v_int * sin_psi)
            break
    if chosen is None:
        raise RuntimeError(
            f"encounter sampler rejected {_ENCOUNTER_ATTEMPTS} consecutive attempts; "
            "the geometry configuration is too restrictive"
        )
    ix, iy, vx, vy = chosen

    dt = cfg.step
    half_fov = math.radians(hfov) / 2.0
    turn_rate = math.radians(cfg.turn_rate_deg)
    max_turn = math.radians(cfg.max_turn_deg)
    nmac2 = cfg.nmac_radius**2
    own_speed = cfg.own_speed

    own_x = own_y = 0.0
    heading = 0.0
    turned = 0.0
    turn_dir = 0.0
    detected = False
    steps = cfg.horizon
    alive = True
    min_d2 = ix * ix + iy * iy

    for t in range(cfg.horizon):
        rel_x = ix - own_x
        rel_y = iy - own_y
        r = math.sqrt(rel_x * rel_x + rel_y * rel_y)
        bearing_rel = (float(np.arctan2(rel_y, rel_x)) - heading + math.pi) % (
            2.0 * math.pi
        ) - math.pi
        if not detected and r > DETECT_MIN_RANGE and abs(bearing_rel) <= half_fov:
            p_det = y0 * (1.0 - r / x0)
            if p_det > 1.0:
                p_det = 1.0
            if u_detect[t] < p_det:
                turn_dir = -1.0 if bearing_rel > 0 else 1.0
                detected = True
        if detected and turned < max_turn:
            heading = heading + turn_dir * turn_rate * dt
            turned += turn_rate * dt
        own_x = own_x + dt * own_speed * math.cos(heading)
        own_y = own_y + dt * own_speed * math.sin(heading)
        ix = ix + dt * vx
        iy = iy + dt * vy

        new_x = ix - own_x
        new_y = iy - own_y
        d_x = new_x - rel_x
        d_y = new_y - rel_y
        denom = d_x * d_x + d_y * d_y
        tstar = -(rel_x * d_x + rel_y * d_y) / (denom if denom > 0 else 1.0)
        if tstar < 0.0:
            tstar = 0.0
        elif tstar > 1.0:
            tstar = 1.0
        c_x = rel_x + tstar * d_x
        c_y = rel_y + tstar * d_y
        d2 = c_x * c_x + c_y * c_y
        if d2 < min_d2:
            min_d2 = d2
        if alive and min_d2 < nmac2:
            steps = t + 1
            alive = False

    safe = min_d2 >= nmac2 and math.isfinite(min_d2)
    return np.array([safe]), np.array([steps], dtype=int)


def _daa_batch(
    eta: np.ndarray, cfg: DaaConfig, streams: Sequence[RngStream]
) -> tuple[np.ndarray, np.ndarray]:
    if len(streams) == 1:
        return _daa_single(eta, cfg, streams[0])
    x0, y0, hfov = _check_daa_eta(eta)
    n = len(streams)
    rel, vel_int, u_detect = _sample_encounters(cfg, streams)

    dt = cfg.step
    half_fov = math.radians(hfov) / 2.0
    turn_rate = math.radians(cfg.turn_rate_deg)
    max_turn = math.radians(cfg.max_turn_deg)
    nmac2 = cfg.nmac_radius**2

    own_pos = np.zeros((n, 2))
    intr_pos = rel.copy()
    heading = np.zeros(n)
    turned = np.zeros(n)
    turn_dir = np.zeros(n)
    detected = np.zeros(n, dtype=bool)
    steps = np.full(n, cfg.horizon, dtype=int)
    alive = np.ones(n, dtype=bool)
    min_d2 = rel[:, 0] * rel[:, 0] + rel[:, 1] * rel[:, 1]

    for t in range(cfg.horizon):
        rel_now = intr_pos - own_pos
        r = np.sqrt(rel_now[:, 0] * rel_now[:, 0] + rel_now[:, 1] * rel_now[:, 1])
        bearing_rel = np.arctan2(rel_now[:, 1], rel_now[:, 0]) - heading
        bearing_rel = (bearing_rel + math.pi) % (2.0 * math.pi) - math.pi
        in_band = (r > DETECT_MIN_RANGE) & (np.abs(bearing_rel) <= half_fov)
        p_det = np.clip(y0 * (1.0 - r / x0), 0.0, 1.0)
        newly = ~detected & in_band & (u_detect[:, t] < p_det)
        turn_dir = np.where(newly, np.where(bearing_rel > 0, -1.0, 1.0), turn_dir)
        detected |= newly

        turning = detected & (turned < max_turn)
        heading = heading + np.where(turning, turn_dir * turn_rate * dt, 0.0)
        turned += np.where(turning, turn_rate * dt, 0.0)
        own_pos = own_pos + dt * cfg.own_speed * np.stack(
            [np.cos(heading), np.sin(heading)], axis=1
        )
        intr_pos = intr_pos + dt * vel_int

        rel_new = intr_pos - own_pos
        delta = rel_new - rel_now
        denom = delta[:, 0] * delta[:, 0] + delta[:, 1] * delta[:, 1]
        tstar = np.clip(
            -(rel_now[:, 0] * delta[:, 0] + rel_now[:, 1] * delta[:, 1])
            / np.where(denom > 0, denom, 1.0),
            0.0,
            1.0,
        )
        closest = rel_now + tstar[:, None] * delta
        d2 = closest[:, 0] * closest[:, 0] + closest[:, 1] * closest[:, 1]
        min_d2 = np.minimum(min_d2, d2)
        violated = alive & (min_d2 < nmac2)
        steps[violated] = t + 1
        alive &= ~violated

    bad = ~np.isfinite(min_d2)
    safe = (min_d2 >= nmac2) & ~bad
    return safe, steps


def daa_episode(eta: np.ndarray, cfg: DaaConfig, rng: RngStream) -> EpisodeOutcome:
    """One encounter episode; safe iff the miss distance never drops below the
    NMAC radius."""
    safe, steps = _daa_batch(np.asarray(eta, dtype=float), cfg, [rng])
    return EpisodeOutcome(safe=bool(safe[0]), steps=int(steps[0]))


# ---------------------------------------------------------------------------
# stub
# ---------------------------------------------------------------------------

def _stub_batch(
    eta: np.ndarray, cfg: StubConfig, streams: Sequence[RngStream]
) -> tuple[np.ndarray, np.ndarray]:
    p_fail = float(np.clip(eta[0], 0.0, 1.0))
    cursor = _cursor()
    draws = np.empty(len(streams))
    for i, stream in enumerate(streams):
        draws[i] = cursor.seek(stream).random()
    safe = draws >= p_fail
    return safe, np.ones(len(streams), dtype=int)


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

_REGISTRY = {
    "pendulum": (_pendulum_batch, PendulumConfig),
    "daa": (_daa_batch, DaaConfig),
    "stub": (_stub_batch, StubConfig),
}


def simulator_ids() -> tuple[str, ...]:
    return tuple(_REGISTRY)


def default_config(sim_id: str):
    _, cfg_cls = _require(sim_id)
    return cfg_cls()


def _require(sim_id: str):
    if sim_id not in _REGISTRY:
        raise ValueError(f"unknown simulator {sim_id!r}; known: {sorted(_REGISTRY)}")
    return _REGISTRY[sim_id]


def simulate(sim_id: str, eta: np.ndarray, rng: RngStream, cfg=None) -> EpisodeOutcome:
    """Run one episode of the named simulator at exactly eta (no grid snap)."""
    batch_fn, cfg_cls = _require(sim_id)
    cfg = cfg_cls() if cfg is None else cfg
    safe, steps = batch_fn(np.asarray(eta, dtype=float), cfg, [rng])
    return EpisodeOutcome(safe=bool(safe[0]), steps=int(steps[0]))


def episode_batch(
    sim_id: str, eta: np.ndarray, streams: Sequence[RngStream], cfg=None
) -> np.ndarray:
    """Safe/unsafe outcomes for a batch of episodes at one eta.

    Outcome i depends only on streams[i], so any partition of the batch
    (including single-episode calls) produces identical results.
    """
    batch_fn, cfg_cls = _require(sim_id)
    cfg = cfg_cls() if cfg is None else cfg
    safe, _ = batch_fn(np.asarray(eta, dtype=float), cfg, streams)
    return safe
