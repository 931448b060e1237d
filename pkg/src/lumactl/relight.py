"""Targeted relighting: build a spatial adjustment map, rescale illumination.

The map encodes per-pixel relative illumination deltas. Inside the selection
it follows the inverted illumination (darker pixels receive a larger share),
normalized so its mean over the selection equals the requested ratio; outside
the selection's support it is exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filters import gaussian_blur
from .imgcore import Plane, RgbImage
from .maskgen import MASK_THRESHOLD, Mask
from .promptparse import SCOPES
from .retinex import RetinexPair, reconstruct

MEAN_FLOOR = 1e-6


class EmptyMaskError(Exception):
    """No pixel reaches the hard-mask threshold; nothing to relight."""


@dataclass(frozen=True)
class AdjustmentMap:
    """Signed per-pixel relative illumination deltas plus the request that
    produced them."""

    plane: Plane
    ratio: float
    scope: str

    def __post_init__(self) -> None:
        if abs(self.ratio) > 1.0:
            raise ValueError(f"|ratio| must be at most 1, got {self.ratio}")
        if self.scope not in SCOPES:
            raise ValueError(f"scope must be one of {SCOPES}, got {self.scope!r}")


def adjustment_map(
    illumination: Plane,
    mask: Mask,
    ratio: float,
    smooth_sigma: float,
    scope: str = "region",
) -> AdjustmentMap:
    """Invert illumination, normalize by its selection mean, scale and mask.

    Smoothing (if any) runs after masking and its spill is cut back to the
    mask's support, so locality survives any sigma.
    """
    if abs(ratio) > 1.0:
        raise ValueError(f"|ratio| must be at most 1, got {ratio}")
    if smooth_sigma < 0:
        raise ValueError("smooth_sigma must be non-negative")
    lum = illumination.data
    sel = mask.plane.data
    if lum.shape != sel.shape:
        raise ValueError(f"illumination {lum.shape} vs mask {sel.shape}")
    interior = sel >= MASK_THRESHOLD
    if not interior.any():
        raise EmptyMaskError("mask has no pixel at or above the 0.5 threshold")
    inverted = np.clip(1.0 - lum, 0.0, 1.0)
    mean = max(float(inverted[interior].mean()), MEAN_FLOOR)
    delta = (inverted / mean) * ratio * sel
    if smooth_sigma > 0:
        delta = gaussian_blur(delta, smooth_sigma)
    delta = np.where(sel > 0.0, delta, 0.0)
    return AdjustmentMap(Plane(delta), ratio, scope)


def adjusted_illumination(
    pair: RetinexPair, adjustment: AdjustmentMap, eps_l: float = 1e-3
) -> Plane:
    """Illumination rescaled by (1 + delta), clamped to [eps_l, 1]."""
    lum = pair.illumination.data
    delta = adjustment.plane.data
    if lum.shape != delta.shape:
        raise ValueError(f"illumination {lum.shape} vs adjustment {delta.shape}")
    return Plane(np.clip(lum * (1.0 + delta), eps_l, 1.0))


def apply_relight(
    pair: RetinexPair, adjustment: AdjustmentMap, eps_l: float = 1e-3
) -> RgbImage:
    """Rescale illumination by (1 + delta) and re-compose the image."""
    new_lum = adjusted_illumination(pair, adjustment, eps_l)
    return reconstruct(RetinexPair(new_lum, pair.reflection))


def mean_relative_change(
    before: Plane, after: Plane, interior: np.ndarray
) -> float:
    """Mean of (after - before)/before over the given boolean selection."""
    b = before.data[interior]
    a = after.data[interior]
    return float(((a - b) / b).mean())


def scale_level(illumination: Plane, level: int) -> Plane:
    """Interpolate illumination toward full brightness: L + (level/10)(1-L)."""
    if not isinstance(level, (int, np.integer)) or not 1 <= level <= 10:
        raise ValueError(f"level must be an integer in 1..10, got {level!r}")
    f = level / 10.0
    return Plane(illumination.data + f * (1.0 - illumination.data))


def make_training_pair(
    low: RgbImage, high: RgbImage, level: int, params=None
) -> tuple[RgbImage, RgbImage]:
    """Build one supervision pair: the low input plus a target that keeps the
    reference image's reflectance under level-scaled low illumination."""
    from .retinex import DecomposeParams, decompose

    if (low.height, low.width) != (high.height, high.width):
        raise ValueError("low and high images must share dimensions")
    if params is None:
        params = DecomposeParams()
    pair_low = decompose(low, params)
    pair_high = decompose(high, params)
    lifted = scale_level(pair_low.illumination, level)
    target = reconstruct(RetinexPair(lifted, pair_high.reflection))
    return low, target
