"""Matplotlib figures written next to the delimited reports.

All functions take plain data (curves, grids, loss histories, reports),
write one image file and return its path.  The Agg backend is forced so
figures render without a display.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    # fixed metadata keeps reruns byte-stable
    "svg.hashsalt": "cdrkit",
}


def figsize(width: float = 6.0, ratio: float | None = None) -> tuple[float, float]:
    ratio = ratio if ratio is not None else (math.sqrt(5) - 1.0) / 2.0
    return (width, width * ratio)


@contextmanager
def _figure(path, width=6.0, ratio=None, **subplot_kw):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(width, ratio), subplot_kw=subplot_kw)
        try:
            yield fig, ax
            fig.tight_layout()
            fig.savefig(path, metadata={"Software": None})
        finally:
            plt.close(fig)


def plot_threshold_curves(curves: dict, path) -> Path:
    """Accuracy vs distance threshold, one line per model."""
    with _figure(path) as (fig, ax):
        for name, curve in curves.items():
            d, acc = zip(*curve) if curve else ((), ())
            ax.plot(d, acc, marker="o", ms=3, label=name)
        ax.set_xlabel("distance threshold d (m)")
        ax.set_ylabel("accuracy")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(frameon=False)
    return Path(path)


def plot_grid_surface(result, path) -> Path:
    """Mean error over (t, w) as an annotated heat map; failed cells are blank."""
    t_vals, w_vals = result.t_values, result.w_values
    z = np.full((len(t_vals), len(w_vals)), np.nan)
    for i, t in enumerate(t_vals):
        for j, w in enumerate(w_vals):
            v = result.errors.get((t, w))
            if v is not None:
                z[i, j] = v
    with _figure(path, width=5.5, ratio=0.8) as (fig, ax):
        im = ax.imshow(z, origin="lower", cmap="viridis_r", aspect="auto")
        ax.set_xticks(range(len(w_vals)), [str(w) for w in w_vals])
        ax.set_yticks(range(len(t_vals)), [f"{t // 60}" for t in t_vals])
        ax.set_xlabel("window length w (events)")
        ax.set_ylabel("timespan t (min)")
        for i in range(len(t_vals)):
            for j in range(len(w_vals)):
                if not np.isnan(z[i, j]):
                    ax.text(j, i, f"{z[i, j]:.0f}", ha="center", va="center", fontsize=7, color="w")
        try:
            bi, bj = t_vals.index(result.argmin[0]), w_vals.index(result.argmin[1])
            ax.scatter([bj], [bi], marker="s", s=260, facecolors="none", edgecolors="r", linewidths=1.5)
        except Exception:  # every cell failed
            pass
        fig.colorbar(im, ax=ax, label="mean error (m)")
    return Path(path)


def plot_training_loss(loss_history, path, label: str | None = None) -> Path:
    with _figure(path) as (fig, ax):
        ax.plot(range(1, len(loss_history) + 1), loss_history, label=label)
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("training loss")
        if label:
            ax.legend(frameon=False)
    return Path(path)


def plot_trajectories(report, path, limit: int | None = 50) -> Path:
    """Actual vs predicted target locations in order (lon on x, lat on y)."""
    preds = report.predictions[:limit] if limit else report.predictions
    actual = np.array([p.target for p in preds])
    predicted = np.array([p.predicted for p in preds])
    with _figure(path, width=5.5, ratio=1.0) as (fig, ax):
        if len(preds):
            ax.plot(actual[:, 1], actual[:, 0], "-o", ms=4, lw=0.8, label="actual")
            ax.plot(predicted[:, 1], predicted[:, 0], "--x", ms=4, lw=0.8, label=f"predicted ({report.model_kind})")
        ax.set_xlabel("longitude")
        ax.set_ylabel("latitude")
        ax.legend(frameon=False)
    return Path(path)


def plot_comparison(rows, path) -> Path:
    """Bar chart of mean error per model."""
    ok = [r for r in rows if r.report is not None]
    with _figure(path) as (fig, ax):
        ax.bar([r.name for r in ok], [r.report.mean for r in ok], color="0.45")
        ax.set_ylabel("mean error (m)")
    return Path(path)
