"""Region masks: PNG thresholding, seeded region growing, feathering.

Oracles, written before the implementation:
  * flood fill against the seed color (no running mean) for constant-color
    regions, where both definitions must agree
  * naive full 2-D convolution with clamped borders for the feather
"""

import collections

import numpy as np
import pytest
from PIL import Image

from lumactl import imgcore, maskgen
from lumactl.imgcore import Plane, RgbImage
from lumactl.maskgen import Mask, SegmentParams


def two_region_image(h=8, w=10, left=0.2, right=0.8):
    data = np.full((h, w, 3), right)
    data[:, : w // 2] = left
    return RgbImage(data)


def flood_fill_oracle(img: RgbImage, seed_xy, tol, connectivity=4):
    """BFS on distance to the SEED color; matches region growing only when
    the grown region is constant-colored."""
    x0, y0 = seed_xy
    h, w = img.height, img.width
    seed_color = img.data[y0, x0]
    out = np.zeros((h, w))
    seen = {(y0, x0)}
    out[y0, x0] = 1.0
    q = collections.deque([(y0, x0)])
    offs = [(-1, 0), (0, -1), (0, 1), (1, 0)]
    if connectivity == 8:
        offs = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    while q:
        y, x = q.popleft()
        for dy, dx in offs:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and (ny, nx) not in seen:
                seen.add((ny, nx))
                if np.linalg.norm(img.data[ny, nx] - seed_color) <= tol:
                    out[ny, nx] = 1.0
                    q.append((ny, nx))
    return out


def test_mask_kind_validation():
    Mask(Plane(np.array([[0.0, 1.0]])), "hard")
    Mask(Plane(np.array([[0.25, 1.0]])), "feathered")
    with pytest.raises(ValueError):
        Mask(Plane(np.array([[0.25, 1.0]])), "hard")
    with pytest.raises(ValueError):
        Mask(Plane(np.array([[-0.1, 0.5]])), "feathered")
    with pytest.raises(ValueError):
        Mask(Plane(np.array([[0.0, 1.0]])), "smooth")


def test_load_mask_threshold(tmp_path):
    arr = np.array([[125, 130], [0, 255]], dtype=np.uint8)
    Image.fromarray(arr, "L").save(tmp_path / "m.png")
    mask = maskgen.load_mask(tmp_path / "m.png")
    # 125/255 < 0.5 <= 130/255
    assert mask.plane.data.tolist() == [[0.0, 1.0], [0.0, 1.0]]
    assert mask.kind == "hard"


def test_load_mask_rgb_reduced_by_max_channel(tmp_path):
    arr = np.zeros((1, 2, 3), dtype=np.uint8)
    arr[0, 0, 2] = 200  # blue channel alone pushes the pixel over threshold
    Image.fromarray(arr, "RGB").save(tmp_path / "m.png")
    mask = maskgen.load_mask(tmp_path / "m.png")
    assert mask.plane.data.tolist() == [[1.0, 0.0]]


def test_segment_matches_flood_fill_oracle():
    img = two_region_image()
    params = SegmentParams(seed=(2, 3), color_tol=0.3)
    mask = maskgen.heuristic_segment(img, params)
    oracle = flood_fill_oracle(img, (2, 3), 0.3)
    assert np.array_equal(mask.plane.data, oracle)
    assert oracle[:, :5].all() and not oracle[:, 5:].any()  # exactly the left half


def test_segment_contains_seed_and_is_binary():
    img = two_region_image()
    mask = maskgen.heuristic_segment(img, SegmentParams(seed=(7, 1), color_tol=0.01))
    assert mask.plane.data[1, 7] == 1.0
    assert set(np.unique(mask.plane.data)) <= {0.0, 1.0}
    assert mask.kind == "hard"


def test_segment_deterministic():
    rng = np.random.default_rng(10)
    img = RgbImage(rng.uniform(size=(12, 12, 3)))
    params = SegmentParams(seed=(5, 5), color_tol=0.4, connectivity=8)
    a = maskgen.heuristic_segment(img, params)
    b = maskgen.heuristic_segment(img, params)
    assert np.array_equal(a.plane.data, b.plane.data)


def test_segment_running_mean_drifts():
    # colors 0.0, 0.2, 0.4: strict seed-color fill stops after two pixels,
    # the drifting region mean lets the third one in
    img = RgbImage(np.array([[[0.0] * 3, [0.2] * 3, [0.4] * 3]]))
    tol = 0.53
    grown = maskgen.heuristic_segment(img, SegmentParams(seed=(0, 0), color_tol=tol))
    strict = flood_fill_oracle(img, (0, 0), tol)
    assert grown.plane.data.sum() == 3
    assert strict.sum() == 2


def test_segment_connectivity_difference():
    # two same-colored pixels touching only diagonally
    data = np.zeros((2, 2, 3))
    data[0, 0] = data[1, 1] = 0.9
    img = RgbImage(data)
    p4 = SegmentParams(seed=(0, 0), color_tol=0.1, connectivity=4)
    p8 = SegmentParams(seed=(0, 0), color_tol=0.1, connectivity=8)
    assert maskgen.heuristic_segment(img, p4).plane.data.sum() == 1
    assert maskgen.heuristic_segment(img, p8).plane.data.sum() == 2


def test_segment_seed_out_of_bounds():
    img = two_region_image()
    with pytest.raises(ValueError):
        maskgen.heuristic_segment(img, SegmentParams(seed=(10, 0), color_tol=0.1))


def test_segment_params_validation():
    with pytest.raises(ValueError):
        SegmentParams(seed=(0, 0), color_tol=-1.0)
    with pytest.raises(ValueError):
        SegmentParams(seed=(0, 0), color_tol=0.1, connectivity=6)


def test_feather_sigma_zero_is_identity():
    mask = maskgen.heuristic_segment(
        two_region_image(), SegmentParams(seed=(1, 1), color_tol=0.3)
    )
    out = maskgen.feather(mask, 0.0)
    assert out.kind == "hard"
    assert np.array_equal(out.plane.data, mask.plane.data)


def naive_clamped_blur(arr, sigma):
    r = int(np.ceil(3.0 * sigma))
    xs = np.arange(-r, r + 1, dtype=np.float64)
    k1 = np.exp(-(xs**2) / (2 * sigma * sigma))
    k = np.outer(k1, k1)
    k /= k.sum()
    h, w = arr.shape
    out = np.zeros_like(arr)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    acc += k[dy + r, dx + r] * arr[yy, xx]
            out[y, x] = acc
    return out


def test_feather_matches_naive_convolution():
    plane = np.zeros((9, 9))
    plane[2:6, 3:8] = 1.0
    mask = Mask(Plane(plane), "hard")
    out = maskgen.feather(mask, 1.2)
    assert out.kind == "feathered"
    expect = naive_clamped_blur(plane, 1.2)
    assert np.allclose(out.plane.data, expect, atol=1e-12)


def test_feather_preserves_interior_mass():
    # support at least 3*sigma away from every border: blur must conserve mass
    plane = np.zeros((30, 30))
    plane[12:18, 12:18] = 1.0
    mask = Mask(Plane(plane), "hard")
    out = maskgen.feather(mask, 2.0)
    assert abs(out.plane.data.sum() - plane.sum()) / plane.sum() <= 0.01
    assert out.plane.data.min() >= 0.0 and out.plane.data.max() <= 1.0


def test_invert_hard_mask():
    plane = np.zeros((3, 3))
    plane[1, 1] = 1.0
    inv = maskgen.invert(Mask(Plane(plane), "hard"))
    assert inv.plane.data.sum() == 8.0
    assert inv.plane.data[1, 1] == 0.0


def test_full_mask():
    m = maskgen.full_mask(4, 6)
    assert m.plane.data.shape == (4, 6)
    assert m.plane.data.min() == 1.0 and m.kind == "hard"
