"""Diagnostic figures (requires matplotlib, an optional dependency)."""

from __future__ import annotations

import numpy as np


def _mid_slice(vol: np.ndarray) -> np.ndarray:
    return vol[:, :, vol.shape[2] // 2]


def save_reconstruction_grid(
    path: str,
    truths: list[np.ndarray],
    recons: list[np.ndarray],
    title: str = "",
) -> None:
    """Two-row grid of mid-z slices: ground truth on top, reconstructions below."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if len(truths) != len(recons) or not truths:
        raise ValueError("need matching, non-empty truth/reconstruction lists")
    n = len(truths)
    vmax = max(float(np.max(np.abs(t))) for t in truths) or 1.0
    fig, axes = plt.subplots(2, n, figsize=(1.6 * n, 3.6), squeeze=False)
    for j, (t, r) in enumerate(zip(truths, recons)):
        for i, vol in enumerate((t, r)):
            ax = axes[i][j]
            ax.imshow(_mid_slice(vol), cmap="RdBu_r", vmin=-vmax, vmax=vmax)
            ax.set_xticks([])
            ax.set_yticks([])
        axes[0][j].set_title(f"t={j}", fontsize=8)
    axes[0][0].set_ylabel("truth", fontsize=8)
    axes[1][0].set_ylabel("recon", fontsize=8)
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
