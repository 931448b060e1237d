"""Separable Gaussian smoothing with clamped borders.

Shared by mask feathering and adjustment-map smoothing so both use the exact
same kernel: sampled Gaussian, radius ceil(3*sigma), normalized to unit sum.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    r = int(np.ceil(3.0 * sigma))
    xs = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Blur a 2-D array; sigma = 0 returns a copy unchanged.

    Border samples clamp to the edge value ('nearest'), so blurring a
    constant array returns the same constant.
    """
    if arr.ndim != 2:
        raise ValueError("gaussian_blur expects a 2-D array")
    if sigma == 0:
        return np.array(arr, dtype=np.float64)
    k = gaussian_kernel1d(sigma)
    out = correlate1d(np.asarray(arr, dtype=np.float64), k, axis=0, mode="nearest")
    return correlate1d(out, k, axis=1, mode="nearest")
