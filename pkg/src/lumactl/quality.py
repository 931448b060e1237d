"""Fidelity metrics: PSNR, windowed SSIM on luma, and angular color loss.

All three operate on the float containers, not on quantized bytes, so they
can score intermediate pipeline results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import correlate2d

from .imgcore import RgbImage, luma


@dataclass(frozen=True)
class SsimParams:
    """Structural-similarity window and stabilizers.

    window : odd side length of the Gaussian window, in pixels
    sigma  : window Gaussian sigma
    k1, k2 : stabilizer fractions of the dynamic range
    peak   : dynamic range of the inputs (1.0 for unit-range floats)
    """

    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    peak: float = 1.0

    def __post_init__(self) -> None:
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be a positive odd integer")
        if self.sigma <= 0 or self.k1 <= 0 or self.k2 <= 0 or self.peak <= 0:
            raise ValueError("sigma, k1, k2 and peak must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.peak) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.peak) ** 2


def _check_same_shape(a: RgbImage, b: RgbImage) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"image shapes differ: {a.data.shape} vs {b.data.shape}")


def psnr(a: RgbImage, b: RgbImage, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf for bit-identical inputs."""
    _check_same_shape(a, b)
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _window_kernel(window: int, sigma: float) -> np.ndarray:
    r = window // 2
    xs = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    k2 = np.outer(k, k)
    return k2 / k2.sum()


def ssim(a: RgbImage, b: RgbImage, params: SsimParams = SsimParams()) -> float:
    """Mean SSIM over all fully-contained Gaussian windows of the luma planes."""
    _check_same_shape(a, b)
    la, lb = luma(a).data, luma(b).data
    if min(la.shape) < params.window:
        raise ValueError(
            f"image {la.shape} smaller than the {params.window}x{params.window} window"
        )
    k = _window_kernel(params.window, params.sigma)

    def stats(x: np.ndarray) -> np.ndarray:
        return correlate2d(x, k, mode="valid")

    mu_a, mu_b = stats(la), stats(lb)
    var_a = stats(la * la) - mu_a * mu_a
    var_b = stats(lb * lb) - mu_b * mu_b
    cov = stats(la * lb) - mu_a * mu_b
    c1, c2 = params.c1, params.c2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def angular_color_loss(a: RgbImage, b: RgbImage, norm_floor: float = 1e-8) -> float:
    """Mean per-pixel angle (radians) between RGB vectors.

    Pixels where either vector's norm falls below norm_floor contribute zero;
    the mean still runs over every pixel so the value stays comparable across
    images with different amounts of pure black.
    """
    _check_same_shape(a, b)
    dots = np.einsum("hwc,hwc->hw", a.data, b.data)
    na = np.linalg.norm(a.data, axis=2)
    nb = np.linalg.norm(b.data, axis=2)
    valid = (na >= norm_floor) & (nb >= norm_floor)
    denom = np.where(valid, na * nb, 1.0)
    cosines = np.clip(dots / denom, -1.0, 1.0)
    angles = np.where(valid, np.arccos(cosines), 0.0)
    return float(angles.mean())
