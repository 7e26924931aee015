"""File formats for runs: ground-truth, trace, mask and checkpoint CSVs plus
the JSON run manifest.

Every CSV is flat-index-ordered (the grid's canonical row-major order),
RFC-4180 quoted, and round-trips exactly. The manifest embeds the full run
configuration and a content hash over its canonical JSON encoding, so a run
can be reproduced bit-for-bit from the manifest alone.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .core import ParamGrid, SafeSetEstimate
from .driver import Checkpoint, GroundTruth, RunTrace

__all__ = [
    "config_hash",
    "write_ground_truth_csv",
    "read_ground_truth_csv",
    "truth_from_csv",
    "write_trace_csv",
    "read_trace_csv",
    "write_mask_csv",
    "read_mask_csv",
    "write_checkpoints_csv",
    "read_checkpoints_csv",
    "write_manifest",
    "read_manifest",
]

_FLOAT_FMT = "%.17g"


def _fmt(x: float) -> str:
    return _FLOAT_FMT % x


def config_hash(config: dict) -> str:
    """Content hash of a configuration: sha256 over canonical JSON."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def write_ground_truth_csv(path: str | Path, grid: ParamGrid, truth: GroundTruth) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["flat_index", *grid.dim_names, "p_fail_hat", "n", "safe"])
        for i in range(grid.n_points):
            writer.writerow(
                [
                    i,
                    *(_fmt(v) for v in grid.points[i]),
                    _fmt(truth.p_fail_hat[i]),
                    truth.n_per_point,
                    int(truth.safe_mask[i]),
                ]
            )


def read_ground_truth_csv(path: str | Path, gamma: float | None = None) -> dict:
    """Load a ground-truth CSV; returns dim names, coordinates and arrays.

    When gamma is given the safe mask is recomputed from it, otherwise the
    stored mask column is used (its gamma is recorded in the run manifest).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if len(header) < 4 or header[0] != "flat_index" or header[-3:] != ["p_fail_hat", "n", "safe"]:
        raise ValueError(f"{path}: not a ground-truth CSV (header {header})")
    dim_names = header[1:-3]
    points = np.array([[float(v) for v in row[1 : 1 + len(dim_names)]] for row in rows])
    p_fail = np.array([float(row[-3]) for row in rows])
    n = int(rows[0][-2]) if rows else 0
    mask = np.array([row[-1] == "1" for row in rows])
    if gamma is not None:
        mask = p_fail < gamma
    return {
        "dim_names": dim_names,
        "points": points,
        "p_fail_hat": p_fail,
        "n_per_point": n,
        "safe_mask": mask,
    }


def truth_from_csv(path: str | Path, gamma: float) -> GroundTruth:
    data = read_ground_truth_csv(path, gamma=gamma)
    return GroundTruth(
        p_fail_hat=data["p_fail_hat"],
        n_per_point=data["n_per_point"],
        safe_mask=data["safe_mask"],
        gamma=gamma,
    )


def write_trace_csv(path: str | Path, trace: RunTrace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "flat_index", "safe"])
        for ep, idx, safe in zip(trace.episode_numbers, trace.point_indices, trace.outcomes):
            writer.writerow([int(ep), int(idx), int(safe)])


def read_trace_csv(path: str | Path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["episode", "flat_index", "safe"]:
            raise ValueError(f"{path}: not a trace CSV")
        rows = list(reader)
    return {
        "episode_numbers": np.array([int(r[0]) for r in rows], dtype=np.int64),
        "point_indices": np.array([int(r[1]) for r in rows], dtype=np.int64),
        "outcomes": np.array([r[2] == "1" for r in rows]),
    }


def write_mask_csv(path: str | Path, grid: ParamGrid, estimate: SafeSetEstimate) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["flat_index", *grid.dim_names, "safe", "statistic"])
        for i in range(grid.n_points):
            writer.writerow(
                [
                    i,
                    *(_fmt(v) for v in grid.points[i]),
                    int(estimate.mask[i]),
                    _fmt(estimate.statistic[i]),
                ]
            )


def read_mask_csv(path: str | Path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if header[0] != "flat_index" or header[-2:] != ["safe", "statistic"]:
        raise ValueError(f"{path}: not a mask CSV")
    dim_names = header[1:-2]
    points = np.array([[float(v) for v in row[1 : 1 + len(dim_names)]] for row in rows])
    return {
        "dim_names": dim_names,
        "points": points,
        "mask": np.array([row[-2] == "1" for row in rows]),
        "statistic": np.array([float(row[-1]) for row in rows]),
    }


def write_checkpoints_csv(path: str | Path, n_points: int, checkpoints: list[Checkpoint]) -> None:
    """Safe-set snapshots, one row per checkpoint; the mask is stored sparsely
    as space-separated flat indices."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "n_points", "n_safe", "safe_indices", "precision", "recall"])
        for ck in checkpoints:
            writer.writerow(
                [
                    ck.episode,
                    n_points,
                    len(ck.safe_indices),
                    " ".join(str(int(i)) for i in ck.safe_indices),
                    "" if ck.precision is None else _fmt(ck.precision),
                    "" if ck.recall is None else _fmt(ck.recall),
                ]
            )


def read_checkpoints_csv(path: str | Path) -> tuple[int, list[Checkpoint]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:4] != ["episode", "n_points", "n_safe", "safe_indices"]:
            raise ValueError(f"{path}: not a checkpoints CSV")
        rows = list(reader)
    n_points = int(rows[0][1]) if rows else 0
    checkpoints = []
    for row in rows:
        indices = np.array([int(v) for v in row[3].split()] if row[3] else [], dtype=np.int64)
        checkpoints.append(
            Checkpoint(
                episode=int(row[0]),
                safe_indices=indices,
                precision=float(row[4]) if row[4] else None,
                recall=float(row[5]) if row[5] else None,
            )
        )
    return n_points, checkpoints


def write_manifest(path: str | Path, config: dict, extra: dict | None = None) -> None:
    manifest = {"config": config, "config_hash": config_hash(config)}
    if extra:
        manifest.update(extra)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path: str | Path) -> dict:
    with open(path) as fh:
        manifest = json.load(fh)
    stored = manifest.get("config_hash")
    actual = config_hash(manifest.get("config", {}))
    if stored != actual:
        raise ValueError(f"{path}: config hash mismatch (stored {stored}, actual {actual})")
    return manifest
