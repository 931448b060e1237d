"""Denoising-diffusion math and a small conditioned denoiser.

The schedule holds per-step variances beta[1..T] with the cumulative products
anchored at alpha_bar[0] = 1, so the last reverse step lands on a clean
estimate. Sampling follows the deterministic update

    y_{t-1} = sqrt(ab_{t-1}) * y0_hat + sqrt(1 - ab_{t-1} - sigma^2) * eps_hat
              + sigma * noise,     sigma^2 = min(eta * beta_t, 1 - ab_{t-1})

where y0_hat inverts the closed-form forward marginal. The toy denoiser is a
two-layer convolutional net over the noisy image plus a constant t/T plane,
with a parallel control copy wired through zero-initialized couplers: at
initialization the conditioning input provably cannot change the output, and
gradients are computed by hand so training needs no autograd dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import quality, weightsio
from .fusion import FeatureMap
from .imgcore import RgbImage


class DivergenceError(RuntimeError):
    """Raised when sampling or training produces non-finite values."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite values at step {step}")


@dataclass(frozen=True)
class NoiseSchedule:
    """Arrays indexed 1..T; index 0 holds the empty-product anchors."""

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self) -> None:
        if self.T < 1:
            raise ValueError("schedule needs at least one step")
        for name in ("betas", "alphas", "alpha_bar"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (self.T + 1,):
                raise ValueError(f"{name} must have length T+1")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (np.all(self.betas[1:] > 0.0) and np.all(self.betas[1:] < 1.0)):
            raise ValueError("betas must lie strictly inside (0, 1)")
        if self.alpha_bar[0] != 1.0 or not np.all(np.diff(self.alpha_bar) < 0.0):
            raise ValueError("alpha_bar must start at 1 and strictly decrease")

    def _check_t(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ValueError(f"step {t} outside 1..{self.T}")


def make_schedule(
    T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02
) -> NoiseSchedule:
    """Linear variance ramp from beta_start to beta_end inclusive."""
    if T < 1:
        raise ValueError("T must be at least 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    if T == 1:
        ramp = np.array([beta_start])
    else:
        ramp = np.linspace(beta_start, beta_end, T)
    betas = np.concatenate([[0.0], ramp])
    alphas = 1.0 - betas
    alphas[0] = 1.0
    return NoiseSchedule(T, betas, alphas, np.cumprod(alphas))


def q_sample(
    y0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule
) -> np.ndarray:
    """Forward marginal: y_t = sqrt(ab_t) y0 + sqrt(1 - ab_t) eps."""
    schedule._check_t(t)
    y0 = np.asarray(y0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if y0.shape != eps.shape:
        raise ValueError(f"shape mismatch {y0.shape} vs {eps.shape}")
    ab = schedule.alpha_bar[t]
    return math.sqrt(ab) * y0 + math.sqrt(1.0 - ab) * eps


def predict_y0(
    y_t: np.ndarray, t: int, eps_hat: np.ndarray, schedule: NoiseSchedule
) -> np.ndarray:
    """Invert the forward marginal at the predicted noise."""
    schedule._check_t(t)
    ab = schedule.alpha_bar[t]
    y_t = np.asarray(y_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    return (y_t - math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(ab)


def ddim_step(
    y_t: np.ndarray,
    t: int,
    eps_hat: np.ndarray,
    eta: float,
    schedule: NoiseSchedule,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """One reverse step toward t-1; eta=0 is fully deterministic."""
    schedule._check_t(t)
    if eta < 0.0:
        raise ValueError("eta must be nonnegative")
    ab_prev = schedule.alpha_bar[t - 1]
    y0_hat = predict_y0(y_t, t, eps_hat, schedule)
    sigma_sq = min(eta * schedule.betas[t], 1.0 - ab_prev)
    radicand = max(1.0 - ab_prev - sigma_sq, 0.0)
    out = math.sqrt(ab_prev) * y0_hat + math.sqrt(radicand) * np.asarray(
        eps_hat, dtype=np.float64
    )
    if sigma_sq > 0.0 and noise is not None:
        out = out + math.sqrt(sigma_sq) * np.asarray(noise, dtype=np.float64)
    return out


def sample(
    denoiser,
    condition: FeatureMap | None,
    schedule: NoiseSchedule,
    shape: tuple[int, ...],
    eta: float = 0.0,
    seed: int = 0,
) -> np.ndarray:
    """Draw y_T from a seeded standard normal and walk the chain down to 0."""
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(shape)
    # blow-ups surface as DivergenceError, so numpy's warnings are redundant
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(schedule.T, 0, -1):
            eps_hat = np.asarray(denoiser.predict(y, t, condition), dtype=np.float64)
            if eps_hat.shape != y.shape:
                raise ValueError(f"denoiser changed shape at step {t}")
            noise = rng.standard_normal(shape) if eta > 0.0 else None
            y = ddim_step(y, t, eps_hat, eta, schedule, noise)
            if not np.all(np.isfinite(y)):
                raise DivergenceError(t)
    return y


def simple_loss(eps: np.ndarray, eps_hat: np.ndarray) -> float:
    eps = np.asarray(eps, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if eps.shape != eps_hat.shape:
        raise ValueError(f"shape mismatch {eps.shape} vs {eps_hat.shape}")
    return float(np.mean((eps - eps_hat) ** 2))


@dataclass(frozen=True)
class AuxWeights:
    w_col: float = 0.1
    w_ssim: float = 0.2

    def __post_init__(self) -> None:
        if self.w_col < 0.0 or self.w_ssim < 0.0:
            raise ValueError("aux weights must be nonnegative")


def aux_loss(
    y0_hat: RgbImage,
    y0: RgbImage,
    eps: np.ndarray,
    eps_hat: np.ndarray,
    weights: AuxWeights = AuxWeights(),
) -> float:
    """Noise loss plus weighted color-angle and structure penalties."""
    if y0_hat.data.shape != y0.data.shape:
        raise ValueError("image shapes disagree")
    total = simple_loss(eps, eps_hat)
    if weights.w_col > 0.0:
        total += weights.w_col * quality.angular_color_loss(y0_hat, y0)
    if weights.w_ssim > 0.0:
        total += weights.w_ssim * (1.0 - quality.ssim(y0_hat, y0))
    return total


# ------------------------------------------------------------ toy denoiser


def _f32(arr: np.ndarray) -> np.ndarray:
    # float32-representable values keep checkpoint round trips bit-exact
    return arr.astype("<f4").astype(np.float64)


def _conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Zero-padded same-size cross-correlation; x (C,H,W), w (O,C,k,k)."""
    k = w.shape[2]
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    h, wd = x.shape[1:]
    out = np.zeros((w.shape[0], h, wd))
    for di in range(k):
        for dj in range(k):
            out += np.einsum(
                "oc,chw->ohw", w[:, :, di, dj], xp[:, di : di + h, dj : dj + wd]
            )
    return out + b[:, None, None]


def _conv2d_backward(
    x: np.ndarray, w: np.ndarray, g: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of a zero-padded conv w.r.t. input, kernel, and bias."""
    k = w.shape[2]
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    h, wd = x.shape[1:]
    dw = np.zeros_like(w)
    dxp = np.zeros_like(xp)
    for di in range(k):
        for dj in range(k):
            patch = xp[:, di : di + h, dj : dj + wd]
            dw[:, :, di, dj] = np.einsum("ohw,chw->oc", g, patch)
            dxp[:, di : di + h, dj : dj + wd] += np.einsum(
                "oc,ohw->chw", w[:, :, di, dj], g
            )
    dx = dxp[:, p : p + h, p : p + wd]
    return dx, dw, g.sum(axis=(1, 2))


class ToyConditionedDenoiser:
    """Two conv layers plus a control copy behind zero-initialized couplers.

    predict(y_t, t, condition) stacks y_t with a constant t/T plane, runs the
    base branch, and adds the control branch's output through a 1x1 coupler:

        out = base(x) + Z2 @ ctrl(x + Z1 @ cond)

    Z1 and Z2 start at zero, so conditioning is inert until training moves
    them; an absent condition is treated as all-zero planes.
    """

    IN_CHANNELS = 4
    OUT_CHANNELS = 3
    KERNEL = 3

    def __init__(
        self,
        weights: dict[str, np.ndarray],
        hidden: int,
        cond_channels: int,
        T: int,
        seed: int = 0,
        beta_start: float | None = None,
        beta_end: float | None = None,
    ):
        self.weights = weights
        self.hidden = hidden
        self.cond_channels = cond_channels
        self.T = T
        self.seed = seed
        self.beta_start = beta_start
        self.beta_end = beta_end

    @classmethod
    def initialize(
        cls,
        hidden: int = 8,
        cond_channels: int = 1,
        T: int = 50,
        seed: int = 0,
        coupler_init: str = "zeros",
    ) -> "ToyConditionedDenoiser":
        if coupler_init not in ("zeros", "random"):
            raise ValueError("coupler_init must be 'zeros' or 'random'")
        if hidden < 1 or cond_channels < 1 or T < 1:
            raise ValueError("hidden, cond_channels, and T must be positive")
        rng = np.random.default_rng(seed)
        k = cls.KERNEL
        cin, cout = cls.IN_CHANNELS, cls.OUT_CHANNELS
        w1 = _f32(rng.standard_normal((hidden, cin, k, k)) / math.sqrt(cin * k * k))
        w2 = _f32(rng.standard_normal((cout, hidden, k, k)) / math.sqrt(hidden * k * k))
        weights = {
            "base_w1": w1,
            "base_b1": np.zeros(hidden),
            "base_w2": w2,
            "base_b2": np.zeros(cout),
            # the control copy clones the base at init
            "ctrl_w1": w1.copy(),
            "ctrl_b1": np.zeros(hidden),
            "ctrl_w2": w2.copy(),
            "ctrl_b2": np.zeros(cout),
            "z1_w": np.zeros((cin, cond_channels)),
            "z1_b": np.zeros(cin),
            "z2_w": np.zeros((cout, cout)),
            "z2_b": np.zeros(cout),
        }
        if coupler_init == "random":
            weights["z1_w"] = _f32(
                rng.standard_normal((cin, cond_channels)) / math.sqrt(cond_channels)
            )
            weights["z2_w"] = _f32(rng.standard_normal((cout, cout)) / math.sqrt(cout))
        return cls(weights, hidden, cond_channels, T, seed)

    def _stack_input(self, y_t: np.ndarray, t: int) -> np.ndarray:
        y_t = np.asarray(y_t, dtype=np.float64)
        if y_t.ndim != 3 or y_t.shape[0] != self.OUT_CHANNELS:
            raise ValueError(f"expected (3, H, W), got {y_t.shape}")
        time = np.full((1,) + y_t.shape[1:], t / self.T)
        return np.concatenate([y_t, time], axis=0)

    def _cond_planes(
        self, condition: FeatureMap | None, h: int, w: int
    ) -> np.ndarray:
        if condition is None:
            return np.zeros((self.cond_channels, h, w))
        if condition.channels != self.cond_channels:
            raise ValueError(
                f"condition has {condition.channels} channels,"
                f" denoiser expects {self.cond_channels}"
            )
        if condition.data.shape[1:] != (h, w):
            raise ValueError("condition spatial size disagrees with y_t")
        return condition.data

    def _forward(self, x: np.ndarray, cond: np.ndarray):
        w = self.weights
        a1b = _conv2d(x, w["base_w1"], w["base_b1"])
        r1b = np.maximum(a1b, 0.0)
        base_out = _conv2d(r1b, w["base_w2"], w["base_b2"])
        ctrl_in = x + np.einsum("oc,chw->ohw", w["z1_w"], cond) + w["z1_b"][:, None, None]
        a1c = _conv2d(ctrl_in, w["ctrl_w1"], w["ctrl_b1"])
        r1c = np.maximum(a1c, 0.0)
        ctrl_out = _conv2d(r1c, w["ctrl_w2"], w["ctrl_b2"])
        out = (
            base_out
            + np.einsum("oc,chw->ohw", w["z2_w"], ctrl_out)
            + w["z2_b"][:, None, None]
        )
        cache = (x, cond, a1b, r1b, ctrl_in, a1c, r1c, ctrl_out)
        return out, cache

    def predict(
        self, y_t: np.ndarray, t: int, condition: FeatureMap | None
    ) -> np.ndarray:
        x = self._stack_input(y_t, t)
        cond = self._cond_planes(condition, x.shape[1], x.shape[2])
        out, _ = self._forward(x, cond)
        return out

    def loss_and_grads(
        self,
        y_t: np.ndarray,
        t: int,
        condition: FeatureMap | None,
        eps: np.ndarray,
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Mean-squared noise loss and its gradient for every weight."""
        x = self._stack_input(y_t, t)
        cond = self._cond_planes(condition, x.shape[1], x.shape[2])
        out, cache = self._forward(x, cond)
        x, cond, a1b, r1b, ctrl_in, a1c, r1c, ctrl_out = cache
        eps = np.asarray(eps, dtype=np.float64)
        diff = out - eps
        loss = float(np.mean(diff**2))
        g = 2.0 * diff / diff.size
        w = self.weights
        grads: dict[str, np.ndarray] = {}
        grads["z2_b"] = g.sum(axis=(1, 2))
        grads["z2_w"] = np.einsum("ohw,chw->oc", g, ctrl_out)
        g_ctrl_out = np.einsum("oc,ohw->chw", w["z2_w"], g)
        # base branch
        g_r1b, grads["base_w2"], grads["base_b2"] = _conv2d_backward(
            r1b, w["base_w2"], g
        )
        g_a1b = g_r1b * (a1b > 0.0)
        _, grads["base_w1"], grads["base_b1"] = _conv2d_backward(
            x, w["base_w1"], g_a1b
        )
        # control branch, then its input couplers
        g_r1c, grads["ctrl_w2"], grads["ctrl_b2"] = _conv2d_backward(
            r1c, w["ctrl_w2"], g_ctrl_out
        )
        g_a1c = g_r1c * (a1c > 0.0)
        g_ctrl_in, grads["ctrl_w1"], grads["ctrl_b1"] = _conv2d_backward(
            ctrl_in, w["ctrl_w1"], g_a1c
        )
        grads["z1_b"] = g_ctrl_in.sum(axis=(1, 2))
        grads["z1_w"] = np.einsum("ohw,chw->oc", g_ctrl_in, cond)
        return loss, grads

    def save(self, base: str | Path) -> None:
        extra = {
            "hidden": self.hidden,
            "cond_channels": self.cond_channels,
            "T": self.T,
            "seed": self.seed,
        }
        if self.beta_start is not None:
            extra["beta_start"] = self.beta_start
            extra["beta_end"] = self.beta_end
        weightsio.save_weights(base, self.weights, extra)

    @classmethod
    def load(cls, base: str | Path) -> "ToyConditionedDenoiser":
        weights, extra = weightsio.load_weights(base)
        return cls(
            weights,
            hidden=int(extra["hidden"]),
            cond_channels=int(extra["cond_channels"]),
            T=int(extra["T"]),
            seed=int(extra.get("seed", 0)),
            beta_start=extra.get("beta_start"),
            beta_end=extra.get("beta_end"),
        )


MAX_TRAIN_SIDE = 16


def _dataset_arrays(dataset) -> list[np.ndarray]:
    if not dataset:
        raise ValueError("dataset must be nonempty")
    arrays = []
    for img in dataset:
        if img.height > MAX_TRAIN_SIDE or img.width > MAX_TRAIN_SIDE:
            raise ValueError(
                f"training images must be at most {MAX_TRAIN_SIDE} px per side"
            )
        arrays.append(np.moveaxis(img.data, 2, 0))
    return arrays


def train_toy_denoiser(
    dataset,
    schedule: NoiseSchedule,
    steps: int,
    learning_rate: float,
    seed: int,
    hidden: int = 8,
    cond_channels: int = 1,
    conditions: list[FeatureMap | None] | None = None,
) -> tuple[ToyConditionedDenoiser, list[tuple[int, float]]]:
    """Single-sample SGD on the noise loss; returns the loss trace too."""
    arrays = _dataset_arrays(dataset)
    if conditions is not None and len(conditions) != len(arrays):
        raise ValueError("conditions must pair up with the dataset")
    if steps < 1 or learning_rate <= 0.0:
        raise ValueError("steps must be positive and learning_rate > 0")
    den = ToyConditionedDenoiser.initialize(
        hidden=hidden, cond_channels=cond_channels, T=schedule.T, seed=seed
    )
    den.beta_start = float(schedule.betas[1])
    den.beta_end = float(schedule.betas[schedule.T])
    rng = np.random.default_rng(seed)
    trace: list[tuple[int, float]] = []
    for step in range(1, steps + 1):
        i = int(rng.integers(len(arrays)))
        t = int(rng.integers(1, schedule.T + 1))
        y0 = arrays[i]
        eps = rng.standard_normal(y0.shape)
        y_t = q_sample(y0, t, eps, schedule)
        cond = conditions[i] if conditions is not None else None
        # blow-ups surface as DivergenceError, so numpy's warnings are redundant
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = den.loss_and_grads(y_t, t, cond, eps)
        if not math.isfinite(loss):
            raise DivergenceError(step, f"training loss diverged at step {step}")
        for name, grad in grads.items():
            den.weights[name] -= learning_rate * grad
        trace.append((step, loss))
    for name in den.weights:  # keep the checkpoint contract lossless
        den.weights[name] = _f32(den.weights[name])
    return den, trace


def eval_loss(
    denoiser: ToyConditionedDenoiser,
    dataset,
    schedule: NoiseSchedule,
    seed: int,
    draws_per_image: int = 4,
    conditions: list[FeatureMap | None] | None = None,
) -> float:
    """Noise loss on a frozen set of (t, eps) draws; comparable across runs."""
    arrays = _dataset_arrays(dataset)
    rng = np.random.default_rng(seed)
    losses = []
    for i, y0 in enumerate(arrays):
        cond = conditions[i] if conditions is not None else None
        for _ in range(draws_per_image):
            t = int(rng.integers(1, schedule.T + 1))
            eps = rng.standard_normal(y0.shape)
            y_t = q_sample(y0, t, eps, schedule)
            losses.append(simple_loss(eps, denoiser.predict(y_t, t, cond)))
    return float(np.mean(losses))


def save_loss_trace(path: str | Path, trace: list[tuple[int, float]]) -> None:
    lines = ["step,loss"]
    lines += [f"{step},{loss:.10g}" for step, loss in trace]
    Path(path).write_text("\n".join(lines) + "\n")


def synthetic_images(count: int, side: int, seed: int) -> list[RgbImage]:
    """Small smooth training rasters: blurred noise over a seeded gradient."""
    from .filters import gaussian_blur

    if count < 1 or side < 1 or side > MAX_TRAIN_SIDE:
        raise ValueError(f"need count >= 1 and 1 <= side <= {MAX_TRAIN_SIDE}")
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:side, 0:side] / max(side - 1, 1)
    images = []
    for _ in range(count):
        ax, ay = rng.uniform(-0.4, 0.4, size=2)
        base = 0.45 + ax * (xs - 0.5) + ay * (ys - 0.5)
        data = np.zeros((side, side, 3))
        for c in range(3):
            rough = rng.normal(0.0, 0.2, size=(side, side))
            data[:, :, c] = np.clip(base + gaussian_blur(rough, 1.0), 0.0, 1.0)
        images.append(RgbImage(data))
    return images
