#!/usr/bin/env python3
"""Calibration sweep that produced the default pendulum constants.

Sweeps PD gains over the 21x21 noise grid and prints, for each candidate, the
failure-probability surface summary used to pick the defaults: the noiseless
corner must be safe, the far corner must fail at least half the time, and the
0.1 level set must cross the grid interior as a connected lower-left block.

Run: python scripts/calibrate_pendulum.py [--n 300]
"""

import argparse

import numpy as np

from safesets import build_grid, episode_stream
from safesets.sim import PendulumConfig, episode_batch

GRID = build_grid([("sigma_theta", 0.0, 0.2, 21), ("sigma_omega", 0.0, 0.2, 21)])


def surface(cfg: PendulumConfig, n: int, seed: int = 7) -> np.ndarray:
    rates = np.empty(GRID.n_points)
    for i in range(GRID.n_points):
        streams = [episode_stream(seed, i, k, domain=1) for k in range(n)]
        rates[i] = 1.0 - episode_batch("pendulum", GRID.points[i], streams, cfg).mean()
    return rates.reshape(21, 21)


def summarize(name: str, p: np.ndarray, gamma: float = 0.1) -> None:
    safe = p < gamma
    print(f"\n=== {name}")
    print(f"noiseless corner: {p[0, 0]:.3f}   far corner: {p[-1, -1]:.3f}   safe: {safe.sum()}/441")
    for r in range(0, 21, 2):
        cells = "".join(".#"[int(not s)] for s in safe[r, ::2])
        probs = " ".join(f"{v:4.2f}" for v in p[r, ::2])
        print(f"{cells}    {probs}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=300, help="episodes per grid point")
    args = parser.parse_args()

    candidates = [
        PendulumConfig(k_p=40.0, k_d=8.0),   # rate noise barely matters
        PendulumConfig(k_p=25.0, k_d=10.0),  # same problem
        PendulumConfig(k_p=25.0, k_d=25.0),  # shipped default: diagonal boundary
        PendulumConfig(k_p=20.0, k_d=30.0),  # boundary pushed toward the axes
    ]
    for cfg in candidates:
        name = f"k_p={cfg.k_p}, k_d={cfg.k_d}"
        summarize(name, surface(cfg, args.n))


if __name__ == "__main__":
    main()
