"""PNG renderings of the analysis artifacts (written next to their CSVs)."""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import FeatureHistogram, SurfaceGrid  # noqa: E402

ACTION_COLORS = ("tab:blue", "tab:orange", "tab:green", "tab:red", "tab:purple", "tab:brown")


def plot_surface(grid: SurfaceGrid, path, title: str = "") -> Path:
    gi, gj = np.meshgrid(grid.xs_i, grid.xs_j, indexing="ij")
    fig = plt.figure(figsize=(6, 5))
    ax = fig.add_subplot(projection="3d")
    for a in range(grid.n_actions):
        color = ACTION_COLORS[a % len(ACTION_COLORS)]
        ax.plot_surface(gi, gj, grid.q[:, :, a], color=color, alpha=0.55, linewidth=0)
        ax.plot([], [], color=color, label=f"Q(a={a})")
    ax.set_xlabel(f"x_{grid.i}")
    ax.set_ylabel(f"x_{grid.j}")
    ax.set_zlabel("Q")
    ax.legend(loc="upper left", fontsize=8)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_returns(curves: Dict[str, Sequence[float]], path, window: int, ylabel: str = "return") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, values in curves.items():
        ax.plot(np.arange(1, len(values) + 1), values, label=label)
    ax.set_xlabel("episode")
    ax.set_ylabel(f"{ylabel} ({window}-episode trailing mean)")
    if len(curves) > 1:
        ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_histograms(snapshots: Sequence[FeatureHistogram], path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    cmap = plt.get_cmap("viridis")
    for k, h in enumerate(snapshots):
        centers = (h.edges[:-1] + h.edges[1:]) / 2
        dens = h.counts / max(h.n_samples, 1)
        ax.plot(centers, dens, color=cmap(k / max(len(snapshots) - 1, 1)), label=f"step {h.step}")
    for x in (-2 * np.pi, -np.pi, np.pi, 2 * np.pi):
        ax.axvline(x, color="grey", lw=0.6, ls="--")
    ax.set_xlabel("latent feature value")
    ax.set_ylabel("fraction of samples")
    if 0 < len(snapshots) <= 12:
        ax.legend(fontsize=7)
    return _save(fig, path)


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
