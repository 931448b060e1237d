"""Adaptive fusion of illumination, mask, and reflectance features.

The fuse operator lifts its three inputs to a common channel width, runs a
depthwise convolution over each, mixes them pairwise with scaled dot-product
cross attention over all spatial positions (no positional encoding), then
concatenates the attended branches with the raw low-light and mask views,
rescales every channel by a squeeze-style channel gate, and sums the three
branches into the conditioning tensor handed to the diffusion demonstrator.

All weights are derived from a seed and stored as float32-representable
float64, so dumping to the flat-blob checkpoint format and loading back is
lossless.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate

from . import weightsio
from .imgcore import Plane, RgbImage


@dataclass(frozen=True)
class FeatureMap:
    """Channel-major feature stack, shape (channels, height, width)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64, order="C")
        if arr.ndim != 3:
            raise ValueError(f"FeatureMap needs (C, H, W), got {arr.shape}")
        if arr.size == 0 or not np.all(np.isfinite(arr)):
            raise ValueError("FeatureMap must be non-empty and finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @classmethod
    def from_plane(cls, plane: Plane) -> "FeatureMap":
        return cls(plane.data[None, :, :])

    @classmethod
    def from_rgb(cls, img: RgbImage) -> "FeatureMap":
        return cls(np.moveaxis(img.data, 2, 0))


@dataclass(frozen=True)
class FusionParams:
    """embed_dim: common channel width; kernel: depthwise side; seed: init."""

    embed_dim: int = 8
    kernel: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be positive")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError("kernel must be a positive odd integer")


@dataclass(frozen=True)
class CrossAttentionWeights:
    wq: np.ndarray  # (d, c_q)
    wk: np.ndarray  # (d, c_kv)
    wv: np.ndarray  # (d, c_kv)
    wo: np.ndarray  # (c_q, d)


@dataclass(frozen=True)
class ChannelAttentionWeights:
    w1: np.ndarray  # (hidden, c)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (c, hidden)
    b2: np.ndarray  # (c,)


def _seeded(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    # float32-representable values keep checkpoint round trips bit-exact
    arr = rng.standard_normal(shape) / np.sqrt(max(fan_in, 1))
    return arr.astype("<f4").astype(np.float64)


def depthwise_conv(f: FeatureMap, kernels: np.ndarray) -> FeatureMap:
    """Per-channel 2-D cross-correlation with clamped borders."""
    kernels = np.asarray(kernels, dtype=np.float64)
    if kernels.ndim != 3 or kernels.shape[1] != kernels.shape[2]:
        raise ValueError(f"kernels must be (C, k, k), got {kernels.shape}")
    if kernels.shape[0] != f.channels:
        raise ValueError(
            f"kernel count {kernels.shape[0]} != channel count {f.channels}"
        )
    if kernels.shape[1] % 2 == 0:
        raise ValueError("kernel side must be odd")
    out = np.stack(
        [
            correlate(f.data[c], kernels[c], mode="nearest")
            for c in range(f.channels)
        ]
    )
    return FeatureMap(out)


def init_cross_attention(
    c_q: int, c_kv: int, embed_dim: int, rng: np.random.Generator
) -> CrossAttentionWeights:
    return CrossAttentionWeights(
        wq=_seeded(rng, (embed_dim, c_q), c_q),
        wk=_seeded(rng, (embed_dim, c_kv), c_kv),
        wv=_seeded(rng, (embed_dim, c_kv), c_kv),
        wo=_seeded(rng, (c_q, embed_dim), embed_dim),
    )


def _resolve_attention_weights(
    q: FeatureMap, kv: FeatureMap, weights
) -> CrossAttentionWeights:
    if isinstance(weights, FusionParams):
        rng = np.random.default_rng(weights.seed)
        return init_cross_attention(q.channels, kv.channels, weights.embed_dim, rng)
    return weights


def attention_matrix(
    q: FeatureMap, kv: FeatureMap, weights
) -> np.ndarray:
    """Softmax attention over spatial tokens; rows sum to one."""
    w = _resolve_attention_weights(q, kv, weights)
    if q.data.shape[1:] != kv.data.shape[1:]:
        raise ValueError("q and kv must share spatial dimensions")
    n = q.height * q.width
    tq = q.data.reshape(q.channels, n).T  # (N, c_q)
    tkv = kv.data.reshape(kv.channels, n).T
    qm = tq @ w.wq.T
    km = tkv @ w.wk.T
    scores = (qm @ km.T) / np.sqrt(qm.shape[1])
    scores -= scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=1, keepdims=True)


def cross_attention(q: FeatureMap, kv: FeatureMap, weights) -> FeatureMap:
    """Scaled dot-product attention; queries from q, keys/values from kv.

    `weights` is either explicit CrossAttentionWeights or a FusionParams whose
    seed derives them. Output keeps q's shape.
    """
    w = _resolve_attention_weights(q, kv, weights)
    a = attention_matrix(q, kv, w)
    n = q.height * q.width
    tkv = kv.data.reshape(kv.channels, n).T
    mixed = a @ (tkv @ w.wv.T)  # (N, d)
    out = mixed @ w.wo.T  # (N, c_q)
    return FeatureMap(out.T.reshape(q.channels, q.height, q.width))


def zero_channel_attention(channels: int) -> ChannelAttentionWeights:
    hidden = max(channels // 2, 1)
    return ChannelAttentionWeights(
        w1=np.zeros((hidden, channels)),
        b1=np.zeros(hidden),
        w2=np.zeros((channels, hidden)),
        b2=np.zeros(channels),
    )


def channel_attention(
    f: FeatureMap, weights: ChannelAttentionWeights | None = None
) -> np.ndarray:
    """Per-channel gains in (0, 1): GAP -> bottleneck -> logistic.

    With no weights given the bottleneck is zero-initialized, which gates
    every channel at exactly 0.5.
    """
    if weights is None:
        weights = zero_channel_attention(f.channels)
    gap = f.data.mean(axis=(1, 2))
    hidden = np.maximum(weights.w1 @ gap + weights.b1, 0.0)
    logits = weights.w2 @ hidden + weights.b2
    return 1.0 / (1.0 + np.exp(-logits))


class AccFusion:
    """Seeded weight bundle plus the fuse wiring."""

    C_ILLUM, C_MASK, C_REF = 1, 1, 3

    def __init__(self, params: FusionParams, weights: dict[str, np.ndarray]):
        self.params = params
        self.weights = weights

    @classmethod
    def from_seed(cls, params: FusionParams, init: str = "seeded") -> "AccFusion":
        if init not in ("seeded", "zeros"):
            raise ValueError("init must be 'seeded' or 'zeros'")
        d, k = params.embed_dim, params.kernel
        rng = np.random.default_rng(params.seed)
        spec: dict[str, tuple[tuple[int, ...], int]] = {
            "lift_illum": ((d, cls.C_ILLUM), cls.C_ILLUM),
            "lift_mask": ((d, cls.C_MASK), cls.C_MASK),
            "lift_ref": ((d, cls.C_REF), cls.C_REF),
            "dw_illum": ((d, k, k), k * k),
            "dw_mask": ((d, k, k), k * k),
            "dw_ref": ((d, k, k), k * k),
        }
        for tag in ("im", "ri", "rm"):
            spec[f"{tag}_wq"] = ((d, d), d)
            spec[f"{tag}_wk"] = ((d, d), d)
            spec[f"{tag}_wv"] = ((d, d), d)
            spec[f"{tag}_wo"] = ((d, d), d)
        con1 = 3 * d + 2
        hidden = max(con1 // 2, 1)
        spec["ca_w1"] = ((hidden, con1), con1)
        spec["ca_b1"] = ((hidden,), 0)
        spec["ca_w2"] = ((con1, hidden), hidden)
        spec["ca_b2"] = ((con1,), 0)
        weights = {}
        for name, (shape, fan_in) in spec.items():
            if init == "zeros" or fan_in == 0:  # biases start at zero either way
                weights[name] = np.zeros(shape)
            else:
                weights[name] = _seeded(rng, shape, fan_in)
        return cls(params, weights)

    def _attn(self, tag: str) -> CrossAttentionWeights:
        w = self.weights
        return CrossAttentionWeights(
            w[f"{tag}_wq"], w[f"{tag}_wk"], w[f"{tag}_wv"], w[f"{tag}_wo"]
        )

    def fuse(
        self,
        f_illum: FeatureMap,
        f_mask: FeatureMap,
        f_ref: FeatureMap,
        i_low: FeatureMap,
        i_mask: FeatureMap,
    ) -> FeatureMap:
        shapes = {fm.data.shape[1:] for fm in (f_illum, f_mask, f_ref, i_low, i_mask)}
        if len(shapes) != 1:
            raise ValueError(f"inputs disagree on spatial dimensions: {shapes}")
        expected = {
            "f_illum": (f_illum, self.C_ILLUM),
            "f_mask": (f_mask, self.C_MASK),
            "f_ref": (f_ref, self.C_REF),
            "i_low": (i_low, 1),
            "i_mask": (i_mask, 1),
        }
        for name, (fm, want) in expected.items():
            if fm.channels != want:
                raise ValueError(f"{name} must have {want} channels, got {fm.channels}")
        w = self.weights

        def branch(lift_name: str, dw_name: str, fm: FeatureMap) -> FeatureMap:
            lifted = FeatureMap(np.einsum("oc,chw->ohw", w[lift_name], fm.data))
            return depthwise_conv(lifted, w[dw_name])

        b_illum = branch("lift_illum", "dw_illum", f_illum)
        b_mask = branch("lift_mask", "dw_mask", f_mask)
        b_ref = branch("lift_ref", "dw_ref", f_ref)
        f_im = cross_attention(b_illum, b_mask, self._attn("im"))
        f_ri = cross_attention(b_ref, b_illum, self._attn("ri"))
        f_rm = cross_attention(b_ref, b_mask, self._attn("rm"))
        con1 = np.concatenate(
            [f_im.data, f_ri.data, f_rm.data, i_low.data, i_mask.data], axis=0
        )
        gains = channel_attention(
            FeatureMap(con1),
            ChannelAttentionWeights(w["ca_w1"], w["ca_b1"], w["ca_w2"], w["ca_b2"]),
        )
        scaled = gains[:, None, None] * con1
        d = self.params.embed_dim
        return FeatureMap(scaled[:d] + scaled[d : 2 * d] + scaled[2 * d : 3 * d])

    def save(self, base: str | Path) -> None:
        extra = {
            "embed_dim": self.params.embed_dim,
            "kernel": self.params.kernel,
            "seed": self.params.seed,
        }
        weightsio.save_weights(base, self.weights, extra)

    @classmethod
    def load(cls, base: str | Path) -> "AccFusion":
        weights, extra = weightsio.load_weights(base)
        params = FusionParams(
            embed_dim=int(extra["embed_dim"]),
            kernel=int(extra["kernel"]),
            seed=int(extra["seed"]),
        )
        return cls(params, weights)


def acc_fuse(
    f_illum: FeatureMap,
    f_mask: FeatureMap,
    f_ref: FeatureMap,
    i_low: FeatureMap,
    i_mask: FeatureMap,
    params: FusionParams = FusionParams(),
) -> FeatureMap:
    """One-shot fuse with weights derived from params.seed."""
    return AccFusion.from_seed(params).fuse(f_illum, f_mask, f_ref, i_low, i_mask)
