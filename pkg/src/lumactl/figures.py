"""File-based matplotlib renderings for CLI reports and training runs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # file output only, no display server expected
import matplotlib.pyplot as plt
import numpy as np

from .imgcore import RgbImage
from .relight import AdjustmentMap


def enhance_figures(
    original: RgbImage,
    enhanced: RgbImage,
    adjustment: AdjustmentMap | None,
    outdir: str | Path,
) -> list[Path]:
    """Write a before/after panel and, when available, the adjustment map."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, axes = plt.subplots(1, 2, figsize=(8, 4))
    for ax, img, title in zip(axes, (original, enhanced), ("input", "output")):
        ax.imshow(img.data, vmin=0.0, vmax=1.0)
        ax.set_title(title)
        ax.axis("off")
    fig.tight_layout()
    summary = outdir / "summary.png"
    fig.savefig(summary, dpi=120)
    plt.close(fig)
    written.append(summary)

    if adjustment is not None:
        delta = adjustment.plane.data
        span = max(float(np.abs(delta).max()), 1e-6)
        fig, ax = plt.subplots(figsize=(5, 4))
        im = ax.imshow(delta, cmap="RdBu_r", vmin=-span, vmax=span)
        ax.set_title("relative illumination delta")
        ax.axis("off")
        fig.colorbar(im, ax=ax, shrink=0.85)
        fig.tight_layout()
        map_path = outdir / "adjustment_map.png"
        fig.savefig(map_path, dpi=120)
        plt.close(fig)
        written.append(map_path)
    return written


def loss_curve(trace: list[tuple[int, float]], path: str | Path) -> Path:
    """Plot the training loss trace to a PNG next to its CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    steps = [s for s, _ in trace]
    losses = [l for _, l in trace]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(steps, losses, linewidth=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("noise loss")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
