"""Report rendering: matplotlib figures written to files alongside the
delimited outputs.

Figures are derived purely from the CSV artifacts (ground truth, mask,
checkpoints), so a report can be regenerated at any time without re-running
episodes. Grids with more than two axes are shown as a slice: the two axes
with the most points are plotted and the rest are fixed at their middle
value.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["infer_grid_layout", "render_report"]


def infer_grid_layout(dim_names: list[str], points: np.ndarray) -> tuple[list[np.ndarray], tuple[int, ...]]:
    """Recover per-dimension axis values and the grid shape from flat points."""
    axes = []
    for k in range(points.shape[1]):
        axes.append(np.unique(points[:, k]))
    shape = tuple(len(ax) for ax in axes)
    if int(np.prod(shape)) != points.shape[0]:
        raise ValueError(
            f"points do not form a full tensor grid: shape {shape} vs {points.shape[0]} rows"
        )
    return axes, shape


def _pad_to_2d(axes: list[np.ndarray], dim_names: list[str]) -> tuple[list[np.ndarray], list[str]]:
    """One-dimensional grids plot as a single-row heatmap."""
    if len(axes) == 1:
        return [np.array([0.0]), axes[0]], ["", dim_names[0]]
    return axes, list(dim_names)


def _slice_2d(values: np.ndarray, shape: tuple[int, ...]) -> tuple[np.ndarray, tuple[int, int], dict[int, int]]:
    """Reduce a flat grid field to the 2-D slice used for plotting.

    Returns the 2-D array, the (row_dim, col_dim) axis indices, and the fixed
    index chosen for every other dimension.
    """
    tensor = values.reshape(shape)
    order = np.argsort([-s for s in shape], kind="stable")
    row_dim, col_dim = sorted(order[:2])
    fixed = {}
    indexer: list = []
    for k, s in enumerate(shape):
        if k in (row_dim, col_dim):
            indexer.append(slice(None))
        else:
            fixed[k] = s // 2
            indexer.append(s // 2)
    return tensor[tuple(indexer)], (row_dim, col_dim), fixed


def _span(axis: np.ndarray) -> tuple[float, float]:
    if axis[0] == axis[-1]:
        return float(axis[0]) - 0.5, float(axis[0]) + 0.5
    return float(axis[0]), float(axis[-1])


def _heatmap(ax, field2d: np.ndarray, axes, dims, dim_names, fixed, title: str, cmap="viridis", vmin=None, vmax=None):
    row_dim, col_dim = dims
    col_lo, col_hi = _span(axes[col_dim])
    row_lo, row_hi = _span(axes[row_dim])
    extent = [col_lo, col_hi, row_lo, row_hi]
    im = ax.imshow(
        field2d,
        origin="lower",
        aspect="auto",
        extent=extent,
        cmap=cmap,
        vmin=vmin,
        vmax=vmax,
    )
    ax.set_xlabel(dim_names[col_dim])
    ax.set_ylabel(dim_names[row_dim])
    suffix = "".join(
        f", {dim_names[k]}={axes[k][v]:g}" for k, v in fixed.items() if len(axes[k]) > 1
    )
    ax.set_title(title + suffix)
    return im


def render_report(
    out_dir: str | Path,
    truth: dict | None = None,
    mask: dict | None = None,
    checkpoints: list | None = None,
    truth_mask: np.ndarray | None = None,
    gamma: float | None = None,
) -> list[Path]:
    """Render available figures and the checkpoint metrics CSV into out_dir.

    `truth` and `mask` are the dict forms produced by the CSV readers. Returns
    the list of files written.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if truth is not None:
        axes, shape = infer_grid_layout(truth["dim_names"], truth["points"])
        axes, names = _pad_to_2d(axes, truth["dim_names"])
        field, dims, fixed = _slice_2d(truth["p_fail_hat"], tuple(len(a) for a in axes))
        fig, ax = plt.subplots(figsize=(5.5, 4.5))
        im = _heatmap(ax, field, axes, dims, names, fixed, "failure probability")
        fig.colorbar(im, ax=ax)
        if gamma is not None and min(field.shape) >= 2:
            try:
                ax.contour(
                    axes[dims[1]], axes[dims[0]], field, levels=[gamma], colors="white"
                )
            except ValueError:
                pass  # constant field has no contour
        path = out_dir / "ground_truth.png"
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    if mask is not None:
        axes, shape = infer_grid_layout(mask["dim_names"], mask["points"])
        axes, names = _pad_to_2d(axes, mask["dim_names"])
        shape = tuple(len(a) for a in axes)
        est = mask["mask"].astype(int)
        if truth_mask is not None:
            # 0 TN, 1 FN, 2 FP, 3 TP
            field = truth_mask.astype(int) + 2 * est
            cmap = matplotlib.colors.ListedColormap(["#d9d9d9", "#fdae61", "#d7191c", "#1a9641"])
            title = "estimate vs truth (gray TN, orange FN, red FP, green TP)"
            vmin, vmax = 0, 3
        else:
            field = est
            cmap = matplotlib.colors.ListedColormap(["#d9d9d9", "#1a9641"])
            title = "estimated safe set"
            vmin, vmax = 0, 1
        field2d, dims, fixed = _slice_2d(field.astype(float), shape)
        fig, ax = plt.subplots(figsize=(5.5, 4.5))
        _heatmap(ax, field2d, axes, dims, names, fixed, title, cmap=cmap, vmin=vmin, vmax=vmax)
        path = out_dir / "safe_set.png"
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    if checkpoints:
        rows = []
        for ck in checkpoints:
            precision, recall = ck.precision, ck.recall
            if truth_mask is not None:
                est = np.zeros(truth_mask.shape[0], dtype=bool)
                est[ck.safe_indices] = True
                tp = int(np.count_nonzero(est & truth_mask))
                fp = int(np.count_nonzero(est & ~truth_mask))
                fn = int(np.count_nonzero(~est & truth_mask))
                precision = tp / (tp + fp) if tp + fp else 1.0
                recall = tp / (tp + fn) if tp + fn else 1.0
            rows.append((ck.episode, len(ck.safe_indices), precision, recall))
        csv_path = out_dir / "checkpoint_metrics.csv"
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode", "n_safe", "precision", "recall"])
            for row in rows:
                writer.writerow(
                    [row[0], row[1]]
                    + ["" if v is None else f"{v:.6f}" for v in row[2:]]
                )
        written.append(csv_path)

        fig, ax = plt.subplots(figsize=(5.5, 4.0))
        eps = [r[0] for r in rows]
        ax.plot(eps, [r[1] for r in rows], label="safe-set size", color="tab:blue")
        ax.set_xlabel("episodes")
        ax.set_ylabel("safe-set size")
        if any(r[2] is not None for r in rows):
            ax2 = ax.twinx()
            ax2.plot(eps, [r[2] for r in rows], label="precision", color="tab:green")
            ax2.plot(eps, [r[3] for r in rows], label="recall", color="tab:orange")
            ax2.set_ylabel("precision / recall")
            ax2.set_ylim(0.0, 1.05)
            lines, labels = ax.get_legend_handles_labels()
            lines2, labels2 = ax2.get_legend_handles_labels()
            ax.legend(lines + lines2, labels + labels2, loc="lower right")
        else:
            ax.legend(loc="lower right")
        path = out_dir / "progress.png"
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    return written
