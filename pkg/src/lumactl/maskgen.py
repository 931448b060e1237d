"""Region masks: file loading, seeded region growing, feathering.

The grower is a deterministic stand-in for interactive segmentation: breadth
first from the seed, a pixel joins when its RGB distance to the running
region mean stays within tolerance. FIFO frontier with row-major neighbor
order makes results reproducible byte for byte.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .filters import gaussian_blur
from .imgcore import (
    MissingFileError,
    Plane,
    RgbImage,
    UnsupportedFormatError,
)

MASK_THRESHOLD = 0.5


@dataclass(frozen=True)
class Mask:
    """Selection raster. kind 'hard' means strictly binary {0,1} values;
    'feathered' allows the full [0,1] range."""

    plane: Plane
    kind: str

    def __post_init__(self) -> None:
        vals = self.plane.data
        if self.kind == "hard":
            if not np.all((vals == 0.0) | (vals == 1.0)):
                raise ValueError("hard mask must be binary")
        elif self.kind == "feathered":
            if vals.min() < 0.0 or vals.max() > 1.0:
                raise ValueError("feathered mask values must lie in [0, 1]")
        else:
            raise ValueError(f"unknown mask kind {self.kind!r}")


@dataclass(frozen=True)
class SegmentParams:
    """Region-growing knobs.

    seed         : (x, y) pixel, x = column, y = row
    color_tol    : max RGB Euclidean distance to the running region mean
    connectivity : 4 or 8 neighbors
    """

    seed: tuple[int, int]
    color_tol: float
    connectivity: int = 4

    def __post_init__(self) -> None:
        if self.color_tol <= 0:
            raise ValueError("color_tol must be positive")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")


def full_mask(height: int, width: int) -> Mask:
    return Mask(Plane(np.ones((height, width))), "hard")


def invert(mask: Mask) -> Mask:
    """Complement of a hard mask (the 'background' of a region)."""
    if mask.kind != "hard":
        raise ValueError("invert is defined on hard masks; feather afterwards")
    return Mask(Plane(1.0 - mask.plane.data), "hard")


def load_mask(path: str | Path) -> Mask:
    """Load a grayscale or RGB PNG and threshold at 0.5 into a hard mask."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "LA", "RGB", "RGBA"):
                raise UnsupportedFormatError(
                    f"mask PNG mode {im.mode!r} unsupported"
                )
            arr = np.asarray(im, dtype=np.float64)
    except FileNotFoundError as exc:
        raise MissingFileError(str(path)) from exc
    except UnidentifiedImageError as exc:
        raise UnsupportedFormatError(str(exc)) from exc
    if arr.ndim == 3:  # drop alpha, reduce color by max channel
        n_color = 1 if arr.shape[2] in (1, 2) else 3
        arr = arr[:, :, :n_color].max(axis=2)
    hard = (arr / 255.0 >= MASK_THRESHOLD).astype(np.float64)
    return Mask(Plane(hard), "hard")


_OFFSETS_4 = ((-1, 0), (0, -1), (0, 1), (1, 0))
_OFFSETS_8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def heuristic_segment(reflection: RgbImage, params: SegmentParams) -> Mask:
    """Grow a region from the seed over the reflection image.

    Each examined pixel is visited once; it joins when its RGB distance to
    the current region mean is within color_tol. The mean updates as pixels
    join, so the region can drift along smooth gradients.
    """
    h, w = reflection.height, reflection.width
    x0, y0 = params.seed
    if not (0 <= x0 < w and 0 <= y0 < h):
        raise ValueError(f"seed ({x0},{y0}) outside image {w}x{h}")
    offsets = _OFFSETS_4 if params.connectivity == 4 else _OFFSETS_8
    data = reflection.data
    out = np.zeros((h, w))
    visited = np.zeros((h, w), dtype=bool)
    visited[y0, x0] = True
    out[y0, x0] = 1.0
    color_sum = data[y0, x0].copy()
    count = 1
    queue = collections.deque([(y0, x0)])
    tol2 = params.color_tol * params.color_tol
    while queue:
        y, x = queue.popleft()
        for dy, dx in offsets:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and not visited[ny, nx]:
                visited[ny, nx] = True
                diff = data[ny, nx] - color_sum / count
                if float(diff @ diff) <= tol2:
                    out[ny, nx] = 1.0
                    color_sum += data[ny, nx]
                    count += 1
                    queue.append((ny, nx))
    return Mask(Plane(out), "hard")


def feather(mask: Mask, sigma: float) -> Mask:
    """Gaussian-soften mask edges; sigma = 0 is the identity."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return mask
    blurred = np.clip(gaussian_blur(mask.plane.data, sigma), 0.0, 1.0)
    return Mask(Plane(blurred), "feathered")
