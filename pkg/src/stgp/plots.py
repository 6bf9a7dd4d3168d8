"""Figure rendering for the report-producing commands.

Every function writes a PNG next to the delimited output it illustrates and
returns the path.  The Agg backend keeps rendering headless-safe.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .core import GridSpec

DPI = 130


def _finish(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_field_snapshots(fields, grid: GridSpec, times, path, title=None,
                         max_panels: int = 8):
    """Heatmap strip of selected frames of a flattened field series."""
    fields = np.asarray(fields)
    K = fields.shape[0]
    picks = np.unique(np.linspace(0, K - 1, min(max_panels, K)).astype(int))
    fig, axes = plt.subplots(1, len(picks), figsize=(2.2 * len(picks), 2.6),
                             squeeze=False)
    vmax = np.abs(fields[picks]).max() or 1.0
    for ax, t in zip(axes[0], picks):
        img = fields[t].reshape(grid.n1, grid.n2)
        ax.imshow(img.T, origin="lower", cmap="RdBu_r", vmin=-vmax, vmax=vmax,
                  extent=(0, grid.extent, 0, grid.extent))
        ax.set_title(f"t = {times[t]:.2f}", fontsize=8)
        ax.set_xticks([])
        ax.set_yticks([])
    if title:
        fig.suptitle(title, fontsize=10)
    return _finish(fig, path)


def plot_traces(traces: dict, path, alarms: dict = None, change_frame=None,
                title=None, ylabel="amplitude"):
    """One panel per wavenumber trace, with alarm and change markers."""
    keys = list(traces)
    ncol = min(5, len(keys))
    nrow = (len(keys) + ncol - 1) // ncol
    fig, axes = plt.subplots(nrow, ncol, figsize=(2.6 * ncol, 1.9 * nrow),
                             squeeze=False, sharex=True)
    for i, k in enumerate(keys):
        ax = axes[i // ncol][i % ncol]
        tr = np.asarray(traces[k])
        ax.plot(np.arange(tr.size), tr, lw=0.9)
        if change_frame is not None:
            ax.axvline(change_frame, color="gray", ls="--", lw=0.8)
        if alarms and alarms.get(k) is not None:
            ax.axvline(alarms[k], color="crimson", ls=":", lw=1.2)
        ax.set_title(str(k), fontsize=8)
        ax.tick_params(labelsize=7)
    for j in range(len(keys), nrow * ncol):
        axes[j // ncol][j % ncol].axis("off")
    fig.supxlabel("frame", fontsize=9)
    fig.supylabel(ylabel, fontsize=9)
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    return _finish(fig, path)


def plot_spectrum_slices(u1, u2, v, values_u, values_v, path, title=None):
    """Spatial heatmap at v = 0 plus a temporal slice through u = peak."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.6, 3.0))
    im = ax1.pcolormesh(u1, u2, values_u.T, shading="auto", cmap="viridis")
    fig.colorbar(im, ax=ax1, shrink=0.85)
    ax1.set_xlabel("u1")
    ax1.set_ylabel("u2")
    ax1.set_title("spectrum at v = 0", fontsize=9)
    ax2.semilogy(v, values_v, lw=1.0)
    ax2.set_xlabel("v")
    ax2.set_title("temporal slice at u = 0", fontsize=9)
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    return _finish(fig, path)


def plot_comparison(table: dict, path, title=None):
    """Bar chart of per-model scores from the comparison table."""
    metrics = [m for m in table if m != "model"]
    models = table["model"]
    fig, axes = plt.subplots(1, len(metrics), figsize=(2.6 * len(metrics), 2.8),
                             squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        vals = [v if v is not None else np.nan for v in table[metric]]
        ax.bar(models, vals, color=["#4878d0", "#ee854a"])
        ax.set_title(metric, fontsize=9)
        ax.tick_params(labelsize=8)
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    return _finish(fig, path)
