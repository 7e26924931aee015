"""Shared domain types: parameter grids, observation counts, safety thresholds,
and the deterministic RNG stream contract used by every other module.

A candidate space is a finite tensor-product grid of performance-characteristic
vectors. Each grid keeps both physical coordinates and coordinates normalized
to the unit box, so a single kernel length parameter stays meaningful across
dimensions with different units (radians, meters, degrees).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GridDim",
    "ParamGrid",
    "CountTable",
    "SafetyConfig",
    "SafeSetEstimate",
    "RngStream",
    "build_grid",
    "nearest_grid_point",
    "episode_stream",
    "DOMAIN_EPISODE",
    "DOMAIN_GROUND_TRUTH",
    "DOMAIN_ACQUISITION",
]

# Stream-id domains keep episode draws, ground-truth draws and acquisition
# draws on disjoint Philox keys for one run seed.
DOMAIN_EPISODE = 0
DOMAIN_GROUND_TRUTH = 1
DOMAIN_ACQUISITION = 2

_POINT_BITS = 24
_COUNTER_BITS = 32


@dataclass(frozen=True)
class GridDim:
    """One grid axis: inclusive [lo, hi] range sampled at `count` points."""

    name: str
    lo: float
    hi: float
    count: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError(f"dim {self.name!r}: non-finite bounds")
        if self.count < 1:
            raise ValueError(f"dim {self.name!r}: count must be >= 1, got {self.count}")
        if self.lo > self.hi:
            raise ValueError(f"dim {self.name!r}: lo > hi ({self.lo} > {self.hi})")
        if self.lo == self.hi and self.count != 1:
            raise ValueError(f"dim {self.name!r}: lo == hi requires count == 1")

    def values(self) -> np.ndarray:
        if self.count == 1:
            return np.array([self.lo], dtype=float)
        return np.linspace(self.lo, self.hi, self.count)

    @property
    def span(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class ParamGrid:
    """Finite candidate set: the row-major tensor product of the dims.

    `points` holds physical coordinates, `unit_points` the same points with
    each dimension mapped onto [0, 1] (degenerate single-value dims map to 0).
    Flat row-major order over the dims in declared order is the canonical
    ordering for every serialization in this package.
    """

    dims: tuple[GridDim, ...]
    points: np.ndarray = field(repr=False)
    unit_points: np.ndarray = field(repr=False)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def n_dims(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(d.count for d in self.dims)

    @property
    def dim_names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dims)

    def __len__(self) -> int:
        return self.n_points

    def flat_index(self, multi_index: tuple[int, ...]) -> int:
        return int(np.ravel_multi_index(multi_index, self.shape))

    def multi_index(self, flat: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(flat, self.shape))

    def normalize(self, eta: np.ndarray) -> np.ndarray:
        """Map physical coordinates onto the unit box (not clipped)."""
        eta = np.asarray(eta, dtype=float)
        if eta.shape[-1] != self.n_dims:
            raise ValueError(f"expected {self.n_dims}-dimensional point, got shape {eta.shape}")
        lo = np.array([d.lo for d in self.dims])
        span = np.array([d.span if d.span > 0 else 1.0 for d in self.dims])
        return (eta - lo) / span

    def unit_spacing(self) -> np.ndarray:
        """Normalized spacing per dimension; inf for single-point dims."""
        return np.array(
            [1.0 / (d.count - 1) if d.count > 1 else np.inf for d in self.dims]
        )


def build_grid(dims: list[tuple[str, float, float, int]] | list[GridDim]) -> ParamGrid:
    """Build an evenly spaced inclusive grid with deterministic row-major order."""
    if not dims:
        raise ValueError("grid needs at least one dimension")
    gdims = tuple(d if isinstance(d, GridDim) else GridDim(*d) for d in dims)
    axes = [d.values() for d in gdims]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    unit_axes = []
    for d, ax in zip(gdims, axes):
        if d.span > 0:
            unit_axes.append((ax - d.lo) / d.span)
        else:
            unit_axes.append(np.zeros_like(ax))
    umesh = np.meshgrid(*unit_axes, indexing="ij")
    unit_points = np.stack([m.reshape(-1) for m in umesh], axis=-1)
    points.setflags(write=False)
    unit_points.setflags(write=False)
    return ParamGrid(dims=gdims, points=points, unit_points=unit_points)


def nearest_grid_point(grid: ParamGrid, eta: np.ndarray) -> int:
    """Flat index of the grid point closest to eta in normalized coordinates.

    Points outside the box snap to the nearest grid point; exact ties break
    toward the lowest flat index.
    """
    u = grid.normalize(np.asarray(eta, dtype=float).reshape(-1))
    d2 = np.sum((grid.unit_points - u) ** 2, axis=1)
    return int(np.argmin(d2))


class CountTable:
    """Per-grid-point success counts `p` and failure counts `q`.

    Raw tables hold integers (stored as floats); smoothed tables hold
    non-negative reals. The driver is the single writer; everything else
    treats tables as read-only snapshots.
    """

    __slots__ = ("p", "q", "raw")

    def __init__(self, p: np.ndarray, q: np.ndarray, raw: bool = True):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if p.shape != q.shape or p.ndim != 1:
            raise ValueError("p and q must be 1-D arrays of equal length")
        if np.any(p < 0) or np.any(q < 0):
            raise ValueError("counts must be non-negative")
        if raw and (np.any(p != np.floor(p)) or np.any(q != np.floor(q))):
            raise ValueError("raw counts must be integer-valued")
        self.p = p
        self.q = q
        self.raw = raw

    @classmethod
    def zeros(cls, n: int) -> "CountTable":
        return cls(np.zeros(n), np.zeros(n), raw=True)

    def __len__(self) -> int:
        return self.p.shape[0]

    @property
    def n(self) -> np.ndarray:
        """Episode totals per point."""
        return self.p + self.q

    def copy(self) -> "CountTable":
        return CountTable(self.p.copy(), self.q.copy(), raw=self.raw)


@dataclass(frozen=True)
class SafetyConfig:
    """Failure-probability threshold and the confidence required to call a
    point safe."""

    gamma: float
    delta: float

    def __post_init__(self) -> None:
        if not (0.0 < self.gamma < 1.0):
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class SafeSetEstimate:
    """Boolean membership mask over the grid plus the per-point test statistic
    that produced the decision."""

    mask: np.ndarray
    statistic: np.ndarray

    def __post_init__(self) -> None:
        if self.mask.shape != self.statistic.shape or self.mask.ndim != 1:
            raise ValueError("mask and statistic must be 1-D arrays of equal length")

    @property
    def size(self) -> int:
        return int(np.count_nonzero(self.mask))

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream: identical (seed, stream_id) reproduces the
    identical draw sequence on every platform and thread schedule."""

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not (0 <= self.stream_id < 2**64):
            raise ValueError("stream_id must be a 64-bit unsigned integer")

    def key(self) -> np.ndarray:
        return np.array([self.seed, self.stream_id], dtype=np.uint64)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.key()))


def episode_stream(
    seed: int, point_index: int, counter: int, domain: int = DOMAIN_EPISODE
) -> RngStream:
    """Stream for one simulation episode, keyed by (grid index, episode counter).

    The packing gives every (domain, point, counter) triple a distinct 64-bit
    stream id, so adding parallelism never changes which numbers an episode
    sees.
    """
    if not (0 <= point_index < 2**_POINT_BITS):
        raise ValueError(f"point_index out of range: {point_index}")
    if not (0 <= counter < 2**_COUNTER_BITS):
        raise ValueError(f"episode counter out of range: {counter}")
    sid = (domain << (_POINT_BITS + _COUNTER_BITS)) | (point_index << _COUNTER_BITS) | counter
    return RngStream(seed=seed, stream_id=sid)
