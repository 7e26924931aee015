"""Weighted squared exponential kernel, kernel matrices, and kernel smoothing
of observation counts.

The similarity between two parameter vectors is exp(-(a-b)^T W (a-b) / (2 l^2)),
evaluated on normalized grid coordinates so one scalar length parameter covers
dimensions with different physical units. Smoothing multiplies the grid's
kernel matrix into the raw success/failure count vectors; rows are not
normalized, which deliberately inflates effective episode counts so that
neighboring points share evidence.

On tensor-product grids with diagonal weighting the kernel matrix factorizes
per dimension, so smoothing and the per-length-bin sweeps used by kernel
learning run as small per-axis contractions instead of dense n x n products.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CountTable, ParamGrid

__all__ = [
    "KernelSpec",
    "KernelMatrix",
    "wsqe",
    "kernel_matrix",
    "smooth_counts",
    "GridKernel",
    "KernelBank",
    "TRUNCATE_DEFAULT",
]

# Entries below this are truncated to exact zero when matrices are
# materialized; an approximation knob that keeps smoothing sparse.
TRUNCATE_DEFAULT = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    """Length parameter plus an optional symmetric positive-definite weighting
    matrix (identity in normalized coordinates when omitted)."""

    length: float
    weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not (self.length > 0.0 and np.isfinite(self.length)):
            raise ValueError(f"length must be positive and finite, got {self.length}")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.ndim != 2 or w.shape[0] != w.shape[1]:
                raise ValueError("weights must be a square matrix")
            if not np.allclose(w, w.T, atol=1e-12):
                raise ValueError("weights must be symmetric")
            eigs = np.linalg.eigvalsh(w)
            if np.min(eigs) <= 0:
                raise ValueError("weights must be positive-definite")
            object.__setattr__(self, "weights", w)

    def weight_matrix(self, d: int) -> np.ndarray:
        if self.weights is None:
            return np.eye(d)
        if self.weights.shape[0] != d:
            raise ValueError(
                f"weights are {self.weights.shape[0]}x{self.weights.shape[0]}, points are {d}-dimensional"
            )
        return self.weights

    def diagonal_weights(self, d: int) -> np.ndarray | None:
        """Per-dimension weights when W is (effectively) diagonal, else None."""
        w = self.weight_matrix(d)
        if np.count_nonzero(w - np.diag(np.diagonal(w))) == 0:
            return np.diagonal(w).copy()
        return None


def wsqe(eta: np.ndarray, eta2: np.ndarray, spec: KernelSpec) -> float:
    """Similarity of two points: 1 at zero distance, decaying with weighted
    squared Euclidean distance on the scale of the length parameter."""
    a = np.asarray(eta, dtype=float).reshape(-1)
    b = np.asarray(eta2, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    w = spec.weight_matrix(a.shape[0])
    quad = float(diff @ w @ diff)
    return float(np.exp(-quad / (2.0 * spec.length**2)))


@dataclass(frozen=True)
class KernelMatrix:
    """Pairwise kernel evaluations between a row point list and a column
    point list."""

    entries: np.ndarray = field(repr=False)
    row_points: np.ndarray = field(repr=False)
    col_points: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def is_square(self) -> bool:
        return self.entries.shape[0] == self.entries.shape[1]


def kernel_matrix(
    rows: np.ndarray,
    cols: np.ndarray,
    spec: KernelSpec,
    truncate: float = TRUNCATE_DEFAULT,
) -> KernelMatrix:
    """Dense kernel matrix entries[i][j] = wsqe(rows[i], cols[j], spec)."""
    r = np.atleast_2d(np.asarray(rows, dtype=float))
    c = np.atleast_2d(np.asarray(cols, dtype=float))
    if r.shape[1] != c.shape[1]:
        raise ValueError(f"dimension mismatch: {r.shape[1]} vs {c.shape[1]}")
    w = spec.weight_matrix(r.shape[1])
    diff = r[:, None, :] - c[None, :, :]
    quad = np.einsum("ijk,kl,ijl->ij", diff, w, diff)
    entries = np.exp(-quad / (2.0 * spec.length**2))
    if truncate > 0.0:
        entries[entries < truncate] = 0.0
    return KernelMatrix(entries=entries, row_points=r, col_points=c)


def smooth_counts(counts: CountTable, kmat: KernelMatrix | np.ndarray) -> CountTable:
    """Kernel-smoothed counts: p_hat = K p, q_hat = K q (no row normalization)."""
    entries = kmat.entries if isinstance(kmat, KernelMatrix) else np.asarray(kmat)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise ValueError("smoothing requires a square kernel matrix")
    if entries.shape[0] != len(counts):
        raise ValueError(
            f"size mismatch: kernel is {entries.shape[0]}x{entries.shape[1]}, counts have {len(counts)} points"
        )
    return CountTable(entries @ counts.p, entries @ counts.q, raw=False)


def _axis_factors(grid: ParamGrid, length: float, diag_w: np.ndarray) -> list[np.ndarray]:
    """Per-dimension kernel factors over the grid's normalized axis values."""
    factors = []
    for k, dim in enumerate(grid.dims):
        if dim.count == 1:
            ax = np.zeros(1)
        else:
            ax = np.linspace(0.0, 1.0, dim.count)
        d2 = (ax[:, None] - ax[None, :]) ** 2 * diag_w[k]
        factors.append(np.exp(-d2 / (2.0 * length**2)))
    return factors


def _tensor_matvec(factors: list[np.ndarray], v: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    t = v.reshape(shape)
    for axis, f in enumerate(factors):
        t = np.moveaxis(np.tensordot(f, t, axes=(1, axis)), 0, axis)
    return t.reshape(-1)


class GridKernel:
    """Cached smoothing operator for one (grid, spec) pair.

    Uses the per-dimension factorization when the weighting is diagonal and
    falls back to a dense matrix otherwise. Construct once, share freely:
    all state is read-only after construction.
    """

    def __init__(self, grid: ParamGrid, spec: KernelSpec):
        self.grid = grid
        self.spec = spec
        diag = spec.diagonal_weights(grid.n_dims)
        self._shape = grid.shape
        if diag is not None:
            self._factors = _axis_factors(grid, spec.length, diag)
            self._dense = None
        else:
            self._factors = None
            self._dense = kernel_matrix(grid.unit_points, grid.unit_points, spec, truncate=0.0).entries

    @property
    def n(self) -> int:
        return self.grid.n_points

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got shape {v.shape}")
        if self._factors is not None:
            return _tensor_matvec(self._factors, v, self._shape)
        return self._dense @ v

    def column(self, j: int) -> np.ndarray:
        """Column j of the kernel matrix (= row j by symmetry)."""
        if self._dense is not None:
            return self._dense[:, j].copy()
        multi = np.unravel_index(j, self._shape)
        col = self._factors[0][:, multi[0]]
        for f, idx in zip(self._factors[1:], multi[1:]):
            col = np.multiply.outer(col, f[:, idx])
        return col.reshape(-1)

    def dense(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense.copy()
        out = self._factors[0]
        for f in self._factors[1:]:
            out = np.kron(out, f)
        return out

    def smooth(self, counts: CountTable) -> CountTable:
        if len(counts) != self.n:
            raise ValueError(f"counts have {len(counts)} points, grid has {self.n}")
        return CountTable(self.matvec(counts.p), self.matvec(counts.q), raw=False)


class KernelBank:
    """Per-dimension kernel factors for a whole ladder of length values.

    Kernel learning scores every candidate length at every grid point, so it
    needs smoothed counts under each length in the ladder. Keeping only the
    per-axis factors makes that sweep cheap in both time and memory. Requires
    diagonal weighting (the only configuration the factorization covers).
    """

    def __init__(self, grid: ParamGrid, lengths: np.ndarray, weights: np.ndarray | None = None):
        lengths = np.asarray(lengths, dtype=float)
        if lengths.ndim != 1 or lengths.size < 1:
            raise ValueError("lengths must be a non-empty 1-D array")
        if np.any(lengths <= 0):
            raise ValueError("lengths must be positive")
        spec0 = KernelSpec(length=float(lengths[0]), weights=weights)
        diag = spec0.diagonal_weights(grid.n_dims)
        if diag is None:
            raise NotImplementedError("KernelBank requires diagonal kernel weighting")
        self.grid = grid
        self.lengths = lengths
        self._shape = grid.shape
        # factor stack per dim: (bins, n_k, n_k)
        self._factors = []
        for k, dim in enumerate(grid.dims):
            ax = np.zeros(1) if dim.count == 1 else np.linspace(0.0, 1.0, dim.count)
            d2 = (ax[:, None] - ax[None, :]) ** 2 * diag[k]
            self._factors.append(np.exp(-d2[None, :, :] / (2.0 * lengths[:, None, None] ** 2)))

    @property
    def n(self) -> int:
        return self.grid.n_points

    @property
    def bins(self) -> int:
        return self.lengths.size

    def matvec_all(self, v: np.ndarray) -> np.ndarray:
        """K_l @ v for every length l; returns (bins, n)."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got shape {v.shape}")
        t = np.broadcast_to(v.reshape(self._shape), (self.bins, *self._shape)).copy()
        for axis, fb in enumerate(self._factors):
            t = np.moveaxis(t, axis + 1, -1)
            lead = t.shape[:-1]
            t = np.matmul(t.reshape(self.bins, -1, t.shape[-1]), np.transpose(fb, (0, 2, 1)))
            t = np.moveaxis(t.reshape(lead + (t.shape[-1],)), -1, axis + 1)
        return t.reshape(self.bins, self.n)

    def column_all(self, j: int) -> np.ndarray:
        """Column j of K_l for every length l; returns (bins, n)."""
        multi = np.unravel_index(j, self._shape)
        col = self._factors[0][:, :, multi[0]]
        for fb, idx in zip(self._factors[1:], multi[1:]):
            col = np.einsum("bi,bj->bij", col, fb[:, :, idx]).reshape(self.bins, -1)
        return col.reshape(self.bins, self.n)
