"""Adjustment-map construction and illumination rescaling.

Frozen hand cases:
  * uniform illumination 0.5, full mask, ratio 0.2 -> map is 0.2 everywhere
    (any smoothing sigma: clamp-border blur of a constant is the constant)
  * two pixels L = [0.2, 0.8], full mask, ratio 0.3, sigma 0:
    inverted = [0.8, 0.2], mean 0.5, map = [1.6, 0.4]*0.3 = [0.48, 0.12]
  * scale-level: L = 0.2 at level 5 -> 0.2 + 0.5*(1-0.2) = 0.6; with
    reflectance 0.9 the target is uniform 0.54
"""

import numpy as np
import pytest

from fixtures import dark_room_image, natural_image
from lumactl import relight, retinex
from lumactl.imgcore import Plane, RgbImage
from lumactl.maskgen import Mask, feather, full_mask
from lumactl.relight import AdjustmentMap, EmptyMaskError
from lumactl.retinex import RetinexPair


def hard_mask(h, w, box):
    plane = np.zeros((h, w))
    y0, y1, x0, x1 = box
    plane[y0:y1, x0:x1] = 1.0
    return Mask(Plane(plane), "hard")


def test_uniform_hand_case():
    L = Plane(np.full((6, 6), 0.5))
    m = relight.adjustment_map(L, full_mask(6, 6), 0.2, smooth_sigma=3.0)
    assert np.allclose(m.plane.data, 0.2, atol=1e-12)


def test_two_pixel_hand_case():
    L = Plane(np.array([[0.2, 0.8]]))
    m = relight.adjustment_map(L, full_mask(1, 2), 0.3, smooth_sigma=0.0)
    assert np.allclose(m.plane.data, [[0.48, 0.12]], atol=1e-12)


def test_darker_pixels_boosted_more():
    L = Plane(np.array([[0.1, 0.3, 0.7]]))
    m = relight.adjustment_map(L, full_mask(1, 3), 0.2, smooth_sigma=0.0)
    vals = m.plane.data[0]
    assert vals[0] > vals[1] > vals[2] > 0


def test_map_mean_equals_ratio_over_hard_mask():
    rng = np.random.default_rng(31)
    L = Plane(rng.uniform(0.1, 0.6, size=(12, 16)))
    mask = hard_mask(12, 16, (3, 9, 4, 12))
    m = relight.adjustment_map(L, mask, 0.25, smooth_sigma=0.0)
    interior = mask.plane.data >= 0.5
    assert abs(m.plane.data[interior].mean() - 0.25) <= 1e-6


def test_map_zero_outside_support_even_after_smoothing():
    L = Plane(np.random.default_rng(32).uniform(0.2, 0.5, size=(11, 11)))
    mask = hard_mask(11, 11, (3, 8, 3, 8))
    m = relight.adjustment_map(L, mask, 0.3, smooth_sigma=2.0)
    outside = mask.plane.data == 0.0
    assert np.all(m.plane.data[outside] == 0.0)
    assert m.plane.data[~outside].max() > 0.0


def test_map_respects_feathered_support():
    L = Plane(np.full((13, 13), 0.4))
    fm = feather(hard_mask(13, 13, (5, 8, 5, 8)), 1.0)
    m = relight.adjustment_map(L, fm, 0.3, smooth_sigma=0.0)
    assert np.all(m.plane.data[fm.plane.data == 0.0] == 0.0)
    # feathered fringe gets a scaled-down delta
    fringe = (fm.plane.data > 0.0) & (fm.plane.data < 0.5)
    assert m.plane.data[fringe].max() < m.plane.data.max()


def test_map_empty_mask_rejected():
    L = Plane(np.full((4, 4), 0.5))
    empty = Mask(Plane(np.zeros((4, 4))), "hard")
    with pytest.raises(EmptyMaskError):
        relight.adjustment_map(L, empty, 0.2, 0.0)


def test_map_validation():
    L = Plane(np.full((4, 4), 0.5))
    with pytest.raises(ValueError):
        relight.adjustment_map(L, full_mask(4, 4), 1.5, 0.0)
    with pytest.raises(ValueError):
        relight.adjustment_map(L, full_mask(5, 4), 0.2, 0.0)
    with pytest.raises(ValueError):
        AdjustmentMap(Plane(np.zeros((2, 2))), ratio=-2.0, scope="region")
    with pytest.raises(ValueError):
        AdjustmentMap(Plane(np.zeros((2, 2))), ratio=0.2, scope="nowhere")


def test_apply_mean_relative_change_equals_ratio():
    img = dark_room_image(3)
    pair = retinex.decompose(img)
    mask = hard_mask(img.height, img.width, (4, 12, 6, 20))
    m = relight.adjustment_map(pair.illumination, mask, 0.25, smooth_sigma=0.0)
    out_pair_l = np.clip(pair.illumination.data * (1 + m.plane.data), 1e-3, 1.0)
    # no clipping may occur for the contract to hold exactly
    assert np.all(pair.illumination.data * (1 + m.plane.data) <= 1.0)
    interior = mask.plane.data >= 0.5
    change = relight.mean_relative_change(
        pair.illumination, Plane(out_pair_l), interior
    )
    assert abs(change - 0.25) <= 1e-6


def test_apply_locality_bit_exact_outside_mask():
    img = natural_image(40, 16, 20)
    pair = retinex.decompose(img)
    mask = hard_mask(16, 20, (2, 9, 3, 11))
    m = relight.adjustment_map(pair.illumination, mask, 0.3, smooth_sigma=0.0)
    out = relight.apply_relight(pair, m)
    base = retinex.reconstruct(pair)
    outside = mask.plane.data == 0.0
    assert np.array_equal(out.data[outside], base.data[outside])
    assert not np.array_equal(out.data[~outside], base.data[~outside])


def test_apply_darken_is_anti_monotone():
    img = dark_room_image(4)
    pair = retinex.decompose(img)
    mask = hard_mask(img.height, img.width, (2, 10, 2, 10))
    m = relight.adjustment_map(pair.illumination, mask, -0.2, smooth_sigma=0.0)
    out = relight.apply_relight(pair, m)
    interior = mask.plane.data >= 0.5
    base = retinex.reconstruct(pair)
    assert np.all(out.data[interior] <= base.data[interior] + 1e-12)
    change = relight.mean_relative_change(
        pair.illumination,
        Plane(np.clip(pair.illumination.data * (1 + m.plane.data), 1e-3, 1)),
        interior,
    )
    assert abs(change + 0.2) <= 1e-6


def test_apply_clipping_caps_achieved_change():
    L = Plane(np.full((6, 6), 0.9))
    pair = RetinexPair(L, RgbImage(np.full((6, 6, 3), 0.8)))
    m = relight.adjustment_map(L, full_mask(6, 6), 0.5, smooth_sigma=0.0)
    out = relight.apply_relight(pair, m)
    assert out.data.max() <= 1.0
    achieved = relight.mean_relative_change(
        L, Plane(np.clip(L.data * (1 + m.plane.data), 1e-3, 1.0)), np.full((6, 6), True)
    )
    assert achieved < 0.5  # illumination saturated at 1


def test_apply_dimension_mismatch():
    img = natural_image(41, 8, 8)
    pair = retinex.decompose(img)
    m = relight.adjustment_map(Plane(np.full((4, 4), 0.5)), full_mask(4, 4), 0.2, 0.0)
    with pytest.raises(ValueError):
        relight.apply_relight(pair, m)


def test_scale_level_hand_case():
    L5 = relight.scale_level(Plane(np.full((3, 3), 0.2)), 5)
    assert np.allclose(L5.data, 0.6, atol=1e-12)
    target = retinex.reconstruct(
        RetinexPair(L5, RgbImage(np.full((3, 3, 3), 0.9)))
    )
    assert np.allclose(target.data, 0.54, atol=1e-12)


def test_scale_level_extremes():
    L = Plane(np.array([[0.2, 0.7]]))
    assert np.allclose(relight.scale_level(L, 10).data, 1.0, atol=1e-12)
    assert np.allclose(relight.scale_level(L, 1).data, [[0.28, 0.73]], atol=1e-12)


def test_make_training_pair_level10_recovers_reference_reflectance():
    low = dark_room_image(5)
    high = natural_image(5, low.height, low.width)
    inp, target = relight.make_training_pair(low, high, 10)
    assert inp is low
    pair_high = retinex.decompose(high)
    assert np.max(np.abs(target.data - pair_high.reflection.data)) <= 1e-9


def test_make_training_pair_levels_monotone():
    low = dark_room_image(6)
    high = natural_image(6, low.height, low.width)
    means = [
        relight.make_training_pair(low, high, lvl)[1].data.mean()
        for lvl in range(1, 11)
    ]
    assert all(b >= a - 1e-12 for a, b in zip(means, means[1:]))


def test_make_training_pair_validation():
    low = dark_room_image(7)
    high = natural_image(7, low.height, low.width)
    for bad in (0, 11):
        with pytest.raises(ValueError):
            relight.make_training_pair(low, high, bad)
    with pytest.raises(ValueError):
        relight.make_training_pair(low, natural_image(7, 4, 4), 5)
