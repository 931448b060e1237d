"""Fidelity metrics against closed forms and naive per-window oracles.

Frozen expectations, computed by hand before the implementation:
  * uniform 0 vs uniform 0.5, peak 1: MSE 0.25 -> 10*log10(4) = 6.0206 dB
  * constant 0.5 vs 0.25: variance terms vanish, SSIM collapses to
    (2*0.125 + 1e-4) / (0.3125 + 1e-4) = 0.2501/0.3126 ~= 0.80006
  * orthogonal unit colors: angle exactly pi/2
"""

import math

import numpy as np
import pytest

from lumactl import quality
from lumactl.imgcore import RgbImage
from lumactl.quality import SsimParams


def _img(value, h=16, w=16):
    return RgbImage(np.full((h, w, 3), value, dtype=np.float64))


def _gauss_kernel(window, sigma):
    r = window // 2
    xs = np.arange(-r, r + 1, dtype=np.float64)
    k1 = np.exp(-(xs**2) / (2 * sigma * sigma))
    k2 = np.outer(k1, k1)
    return k2 / k2.sum()


def naive_ssim(a: RgbImage, b: RgbImage, p: SsimParams) -> float:
    """Per-window double loop; independent of the vectorized path."""
    la = a.data.mean(axis=2)
    lb = b.data.mean(axis=2)
    k = _gauss_kernel(p.window, p.sigma)
    c1 = (p.k1 * p.peak) ** 2
    c2 = (p.k2 * p.peak) ** 2
    h, w = la.shape
    n = p.window
    vals = []
    for y in range(h - n + 1):
        for x in range(w - n + 1):
            wa = la[y : y + n, x : x + n]
            wb = lb[y : y + n, x : x + n]
            mua = float((k * wa).sum())
            mub = float((k * wb).sum())
            va = float((k * wa * wa).sum()) - mua * mua
            vb = float((k * wb * wb).sum()) - mub * mub
            cov = float((k * wa * wb).sum()) - mua * mub
            vals.append(
                ((2 * mua * mub + c1) * (2 * cov + c2))
                / ((mua * mua + mub * mub + c1) * (va + vb + c2))
            )
    return float(np.mean(vals))


def test_psnr_hand_case():
    assert math.isclose(quality.psnr(_img(0.0), _img(0.5)), 6.0206, abs_tol=1e-4)


def test_psnr_identical_is_infinite():
    assert quality.psnr(_img(0.3), _img(0.3)) == math.inf


def test_psnr_symmetry_and_monotonicity():
    a, b, c = _img(0.2), _img(0.4), _img(0.8)
    assert quality.psnr(a, b) == quality.psnr(b, a)
    assert quality.psnr(a, b) > quality.psnr(a, c)


def test_psnr_peak_parameter():
    # doubling peak adds 20*log10(2) dB
    lo = quality.psnr(_img(0.0), _img(0.5), peak=1.0)
    hi = quality.psnr(_img(0.0), _img(0.5), peak=2.0)
    assert math.isclose(hi - lo, 20 * math.log10(2), abs_tol=1e-9)


def test_ssim_identical_is_one():
    rng = np.random.default_rng(5)
    img = RgbImage(rng.uniform(size=(16, 16, 3)))
    assert abs(quality.ssim(img, img) - 1.0) <= 1e-12


def test_ssim_constant_closed_form():
    got = quality.ssim(_img(0.5), _img(0.25))
    assert math.isclose(got, 0.80006, abs_tol=1e-5)


def test_ssim_matches_naive_window_loop():
    rng = np.random.default_rng(6)
    a = RgbImage(rng.uniform(size=(15, 14, 3)))
    b = RgbImage(np.clip(a.data + rng.normal(0, 0.1, size=(15, 14, 3)), 0, 1))
    p = SsimParams()
    assert math.isclose(quality.ssim(a, b, p), naive_ssim(a, b, p), abs_tol=1e-6)


def test_ssim_symmetry_and_range():
    rng = np.random.default_rng(7)
    a = RgbImage(rng.uniform(size=(12, 12, 3)))
    b = RgbImage(rng.uniform(size=(12, 12, 3)))
    s1, s2 = quality.ssim(a, b), quality.ssim(b, a)
    assert math.isclose(s1, s2, abs_tol=1e-12)
    assert -1.0 <= s1 <= 1.0


def test_ssim_rejects_small_images():
    with pytest.raises(ValueError):
        quality.ssim(_img(0.5, 8, 8), _img(0.5, 8, 8))  # window 11 > 8


def test_ssim_custom_window():
    a, b = _img(0.5, 8, 8), _img(0.25, 8, 8)
    got = quality.ssim(a, b, SsimParams(window=5))
    assert math.isclose(got, 0.80006, abs_tol=1e-5)


def test_ssim_dimension_mismatch():
    with pytest.raises(ValueError):
        quality.ssim(_img(0.5, 16, 16), _img(0.5, 16, 12))


def test_color_loss_orthogonal():
    a = RgbImage(np.array([[[1.0, 0.0, 0.0]]]))
    b = RgbImage(np.array([[[0.0, 1.0, 0.0]]]))
    assert abs(quality.angular_color_loss(a, b) - math.pi / 2) <= 1e-9


def test_color_loss_zero_norm_contributes_zero():
    a = RgbImage(np.array([[[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]]))
    b = RgbImage(np.array([[[0.0, 1.0, 0.0], [0.5, 0.5, 0.5]]]))
    # pixel 0 contributes pi/2, pixel 1 has a zero vector on one side -> 0
    assert abs(quality.angular_color_loss(a, b) - math.pi / 4) <= 1e-9


def test_color_loss_identical_hues():
    a = RgbImage(np.full((4, 4, 3), 0.25))
    b = RgbImage(np.full((4, 4, 3), 0.75))  # same direction, scaled
    assert quality.angular_color_loss(a, b) <= 1e-7


def test_color_loss_symmetry():
    rng = np.random.default_rng(8)
    a = RgbImage(rng.uniform(size=(6, 6, 3)))
    b = RgbImage(rng.uniform(size=(6, 6, 3)))
    assert math.isclose(
        quality.angular_color_loss(a, b),
        quality.angular_color_loss(b, a),
        abs_tol=1e-12,
    )


def test_color_loss_matches_naive_loop():
    rng = np.random.default_rng(9)
    a = RgbImage(rng.uniform(size=(7, 5, 3)))
    b = RgbImage(rng.uniform(size=(7, 5, 3)))
    total = 0.0
    for y in range(7):
        for x in range(5):
            va, vb = a.data[y, x], b.data[y, x]
            na, nb = np.linalg.norm(va), np.linalg.norm(vb)
            if na >= 1e-8 and nb >= 1e-8:
                total += math.acos(min(1.0, max(-1.0, float(va @ vb) / (na * nb))))
    assert math.isclose(quality.angular_color_loss(a, b), total / 35, abs_tol=1e-9)
