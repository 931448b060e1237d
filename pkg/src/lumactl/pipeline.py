"""Prompt-to-image orchestration.

One enhance call runs five stages: parse the prompt, split the image into
illumination and reflection, resolve a selection mask, build the adjustment
map, and render. The deterministic renderer rescales illumination and splices
the re-composed pixels back over the untouched originals, so anything the
adjustment map left at zero keeps its exact input bytes. The diffusion
renderer is a small-resolution demonstrator: it fuses illumination, mask, and
reflection features into a conditioning stack, samples the toy conditioned
denoiser, and blends the sample in through a feathered mask.

Failures carry the stage name; parse failures additionally keep the error
kind and offending span so callers can surface them precisely.
"""

from __future__ import annotations

from dataclasses import dataclass
from time import perf_counter

import numpy as np

from . import diffusion as df
from . import maskgen, relight, retinex
from .fusion import FeatureMap, FusionParams, acc_fuse
from .imgcore import ImageIOError, Plane, RgbImage, max_channel
from .maskgen import Mask, SegmentParams
from .promptparse import Instruction, ParseError, VocabularyTable, parse
from .relight import AdjustmentMap, EmptyMaskError
from .retinex import RetinexPair

MASK_SOURCES = ("file", "heuristic", "full")
MODES = ("deterministic", "diffusion")
ILLUM_FLOOR = 1e-3


class PipelineError(Exception):
    """A stage failed; `stage` names it, parse errors keep kind and span."""

    def __init__(
        self,
        stage: str,
        message: str,
        kind: str | None = None,
        span: str | None = None,
    ):
        super().__init__(message)
        self.stage = stage
        self.kind = kind
        self.span = span


@dataclass(frozen=True)
class MaskSpec:
    """Where the selection comes from when the prompt names a region."""

    source: str
    path: str | None = None
    seed_point: tuple[int, int] | None = None
    color_tol: float = 0.12
    connectivity: int = 4

    def __post_init__(self) -> None:
        if self.source not in MASK_SOURCES:
            raise ValueError(f"mask source must be one of {MASK_SOURCES}")
        if self.source == "file" and not self.path:
            raise ValueError("mask source 'file' needs a path")
        if self.color_tol <= 0:
            raise ValueError("color_tol must be positive")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")
        if self.seed_point is not None and len(self.seed_point) != 2:
            raise ValueError("seed_point must be (x, y)")


@dataclass(frozen=True)
class EnhanceOptions:
    mode: str = "deterministic"
    smooth_sigma: float = 3.0
    feather_sigma: float = 2.0
    eta: float = 0.0
    seed: int = 0
    ratio_override: float | None = None
    no_tbc: bool = False
    no_acc: bool = False
    schedule_t: int = 50
    beta_start: float = 1e-3
    beta_end: float = 0.2
    max_diffusion_side: int = 64
    retinex_lambda: float = 0.15
    embed_dim: int = 8
    vocabulary: VocabularyTable | None = None
    denoiser: df.ToyConditionedDenoiser | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.smooth_sigma < 0 or self.feather_sigma < 0:
            raise ValueError("sigmas must be non-negative")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.ratio_override is not None and abs(self.ratio_override) > 1.0:
            raise ValueError("|ratio_override| must be at most 1")
        if not 0.0 < self.beta_start <= self.beta_end < 1.0:
            raise ValueError("need 0 < beta_start <= beta_end < 1")
        if self.schedule_t < 1 or self.max_diffusion_side < 1 or self.embed_dim < 1:
            raise ValueError("schedule_t, max_diffusion_side, embed_dim: positive")
        if self.retinex_lambda < 0:
            raise ValueError("retinex_lambda must be non-negative")


@dataclass(frozen=True)
class EnhanceRequest:
    image: RgbImage
    prompt: str
    mask: MaskSpec = MaskSpec("heuristic")
    options: EnhanceOptions = EnhanceOptions()

    def __post_init__(self) -> None:
        if not self.prompt or not self.prompt.strip():
            raise ValueError("prompt must be nonempty")


@dataclass
class EnhanceReport:
    instruction: Instruction
    mode: str
    seed: int
    eta: float
    mask_area_fraction: float
    mean_illum_before: float
    mean_illum_after: float
    requested_ratio: float
    achieved_ratio: float
    timings: dict[str, float]
    # kept for figure rendering, deliberately absent from to_dict()
    adjustment: AdjustmentMap | None = None

    def to_dict(self) -> dict:
        return {
            "instruction": self.instruction.to_dict(),
            "mode": self.mode,
            "seed": self.seed,
            "eta": self.eta,
            "mask_area_fraction": self.mask_area_fraction,
            "mean_illum_before": self.mean_illum_before,
            "mean_illum_after": self.mean_illum_after,
            "requested_ratio": self.requested_ratio,
            "achieved_ratio": self.achieved_ratio,
            "timings": dict(self.timings),
        }


def _resolve_mask(req: EnhanceRequest, instruction: Instruction, pair) -> Mask:
    image = req.image
    if instruction.scope == "global":
        return maskgen.full_mask(image.height, image.width)
    spec = req.mask
    if spec.source == "full":
        region = maskgen.full_mask(image.height, image.width)
    elif spec.source == "file":
        try:
            region = maskgen.load_mask(spec.path)
        except ImageIOError as exc:
            raise PipelineError("mask", str(exc)) from exc
        if region.plane.data.shape != (image.height, image.width):
            raise PipelineError("mask", "mask file size disagrees with the image")
    else:
        if spec.seed_point is None:
            raise PipelineError(
                "mask", "a region prompt with a heuristic mask needs a seed_point"
            )
        params = SegmentParams(
            seed=tuple(spec.seed_point),
            color_tol=spec.color_tol,
            connectivity=spec.connectivity,
        )
        try:
            # growing runs on the reflection: lighting is normalized away
            # there, so the selection follows material, not shadow
            region = maskgen.heuristic_segment(pair.reflection, params)
        except ValueError as exc:
            raise PipelineError("mask", str(exc)) from exc
    if instruction.scope == "background":
        region = maskgen.invert(region)
    return region


def _instruction_planes(
    instruction: Instruction, signed_ratio: float, h: int, w: int
) -> np.ndarray:
    """Scope one-hot plus the signed ratio, broadcast to constant planes."""
    planes = np.zeros((4, h, w))
    planes[("region", "background", "global").index(instruction.scope)] = 1.0
    planes[3] = signed_ratio
    return planes


def _build_condition(
    req: EnhanceRequest,
    pair: RetinexPair,
    soft: Mask,
    adjustment: AdjustmentMap,
    instruction: Instruction,
    signed_ratio: float,
) -> FeatureMap:
    opt = req.options
    lum = FeatureMap.from_plane(pair.illumination)
    msk = FeatureMap.from_plane(soft.plane)
    ref = FeatureMap.from_rgb(pair.reflection)
    instr = _instruction_planes(
        instruction, signed_ratio, req.image.height, req.image.width
    )
    adj_plane = adjustment.plane.data[None]
    if opt.no_acc:
        stack = np.concatenate([lum.data, msk.data, ref.data, adj_plane, instr])
    else:
        i_low = FeatureMap(req.image.data.mean(axis=2)[None])
        fused = acc_fuse(lum, msk, ref, i_low, msk, FusionParams(opt.embed_dim))
        stack = np.concatenate([fused.data, adj_plane, instr])
    return FeatureMap(stack)


def _render_diffusion(
    req: EnhanceRequest,
    pair: RetinexPair,
    hard: Mask,
    adjustment: AdjustmentMap,
    instruction: Instruction,
    signed_ratio: float,
) -> RgbImage:
    opt = req.options
    image = req.image
    side = max(image.height, image.width)
    if side > opt.max_diffusion_side:
        raise PipelineError(
            "render",
            f"diffusion mode is capped at {opt.max_diffusion_side} px per side,"
            f" got {side}",
        )
    soft = maskgen.feather(hard, opt.feather_sigma)
    condition = _build_condition(req, pair, soft, adjustment, instruction, signed_ratio)
    denoiser = opt.denoiser
    if denoiser is None:
        # random couplers: zero-init couplers would ignore the condition by
        # construction, making the conditioning ablations unmeasurable
        denoiser = df.ToyConditionedDenoiser.initialize(
            hidden=8,
            cond_channels=condition.channels,
            T=opt.schedule_t,
            seed=0,
            coupler_init="random",
        )
    if denoiser.cond_channels != condition.channels:
        raise PipelineError(
            "render",
            f"denoiser expects {denoiser.cond_channels} condition channels,"
            f" this request builds {condition.channels}",
        )
    schedule = df.make_schedule(opt.schedule_t, opt.beta_start, opt.beta_end)
    try:
        sampled = df.sample(
            denoiser,
            condition,
            schedule,
            shape=(3, image.height, image.width),
            eta=opt.eta,
            seed=opt.seed,
        )
    except df.DivergenceError as exc:
        raise PipelineError("render", str(exc)) from exc
    sampled = np.clip(np.moveaxis(sampled, 0, 2), 0.0, 1.0)
    weight = soft.plane.data[:, :, None]
    return RgbImage(weight * sampled + (1.0 - weight) * image.data)


def enhance(req: EnhanceRequest) -> tuple[RgbImage, EnhanceReport]:
    opt = req.options
    timings: dict[str, float] = {}

    tick = perf_counter()
    try:
        instruction = parse(req.prompt, opt.vocabulary)
    except ParseError as exc:
        raise PipelineError("parse", str(exc), kind=exc.kind, span=exc.span) from exc
    timings["parse"] = perf_counter() - tick
    signed = instruction.ratio if instruction.direction == "brighten" else -instruction.ratio
    if opt.ratio_override is not None:
        signed = opt.ratio_override

    tick = perf_counter()
    try:
        pair = retinex.decompose(
            req.image, retinex.DecomposeParams(lam=opt.retinex_lambda)
        )
    except retinex.ConvergenceError as exc:
        raise PipelineError("decompose", str(exc)) from exc
    timings["decompose"] = perf_counter() - tick

    tick = perf_counter()
    hard = _resolve_mask(req, instruction, pair)
    interior = hard.plane.data >= maskgen.MASK_THRESHOLD
    if not interior.any():
        raise PipelineError("mask", "selection is empty, nothing to adjust")
    area = float(interior.mean())
    timings["mask"] = perf_counter() - tick

    tick = perf_counter()
    if opt.no_tbc:
        # ablation: a flat multiplier over the selection, no inversion shaping
        adjustment = AdjustmentMap(
            Plane(signed * hard.plane.data), signed, instruction.scope
        )
    else:
        try:
            adjustment = relight.adjustment_map(
                pair.illumination, hard, signed, opt.smooth_sigma, instruction.scope
            )
        except EmptyMaskError as exc:
            raise PipelineError("mask", str(exc)) from exc
    timings["adjustment"] = perf_counter() - tick

    tick = perf_counter()
    before = pair.illumination.data
    mean_before = float(before[interior].mean())
    if signed == 0.0:
        # the identity edit returns the input bytes untouched
        out = req.image
        mean_after = mean_before
        achieved = 0.0
    elif opt.mode == "deterministic":
        new_lum = relight.adjusted_illumination(pair, adjustment, ILLUM_FLOOR)
        recomposed = retinex.reconstruct(RetinexPair(new_lum, pair.reflection))
        touched = (adjustment.plane.data != 0.0)[:, :, None]
        out = RgbImage(np.where(touched, recomposed.data, req.image.data))
        mean_after = float(new_lum.data[interior].mean())
        achieved = relight.mean_relative_change(pair.illumination, new_lum, interior)
    else:
        out = _render_diffusion(req, pair, hard, adjustment, instruction, signed)
        # sampling replaces pixels outright, so gauge illumination by the
        # same per-pixel maximum the decomposition starts from
        proxy_before = np.maximum(max_channel(req.image).data, ILLUM_FLOOR)
        proxy_after = np.maximum(max_channel(out).data, ILLUM_FLOOR)
        mean_before = float(proxy_before[interior].mean())
        mean_after = float(proxy_after[interior].mean())
        achieved = float(
            ((proxy_after[interior] - proxy_before[interior]) / proxy_before[interior]).mean()
        )
    timings["render"] = perf_counter() - tick

    report = EnhanceReport(
        instruction=instruction,
        mode=opt.mode,
        seed=opt.seed,
        eta=opt.eta,
        mask_area_fraction=area,
        mean_illum_before=mean_before,
        mean_illum_after=mean_after,
        requested_ratio=float(signed),
        achieved_ratio=float(achieved),
        timings=timings,
        adjustment=adjustment,
    )
    return out, report
