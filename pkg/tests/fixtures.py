"""Deterministic synthetic rasters shared across test modules."""

import numpy as np

from lumactl.filters import gaussian_blur
from lumactl.imgcore import RgbImage


def natural_image(seed: int, h: int = 24, w: int = 32) -> RgbImage:
    """Smooth colored gradient + soft blob + mild texture, all seeded."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:h, 0:w]
    base = 0.15 + 0.5 * xs / max(w - 1, 1) + 0.2 * ys / max(h - 1, 1)
    cy, cx = rng.uniform(0.25, 0.75) * h, rng.uniform(0.25, 0.75) * w
    blob = 0.35 * np.exp(-(((ys - cy) / (0.2 * h)) ** 2 + ((xs - cx) / (0.2 * w)) ** 2))
    data = np.zeros((h, w, 3))
    for c in range(3):
        texture = gaussian_blur(rng.normal(0, 0.05, size=(h, w)), 1.0)
        gain = 0.8 + 0.2 * rng.uniform()
        data[:, :, c] = np.clip(gain * (base + blob) + texture, 0.0, 1.0)
    return RgbImage(data)


def two_region_image(h: int = 8, w: int = 10, left: float = 0.2, right: float = 0.8):
    data = np.full((h, w, 3), right)
    data[:, : w // 2] = left
    return RgbImage(data)


def dark_room_image(seed: int = 0, h: int = 24, w: int = 32) -> RgbImage:
    """A dim scene with one clearly darker rectangular object."""
    img = natural_image(seed, h, w)
    data = img.data * 0.45
    data = np.array(data)
    data[h // 3 : 2 * h // 3, w // 4 : w // 2] *= 0.4
    return RgbImage(np.clip(data, 0.0, 1.0))
