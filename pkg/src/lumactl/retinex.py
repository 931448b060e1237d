"""Illumination/reflectance splitting with edge-weighted least squares.

The initial illumination guess is the per-pixel channel maximum. It is
smoothed by minimizing

    E(l) = sum_p (l_p - l0_p)^2
         + lam * sum_p [ w_x,p (dx l)_p^2 + w_y,p (dy l)_p^2 ]

with forward differences and weights w_d,p = 1 / (|d l0|_p + eps_w), so
smoothing relaxes across flat areas but respects strong edges of the guess.
The normal equations (I + lam*G) l = l0 are symmetric positive definite and
are solved by conjugate gradients.

The final illumination is forced pointwise above the channel maximum, which
makes reflectance = image / illumination land in [0, 1] and the product
reconstruct the input exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .imgcore import Plane, RgbImage, max_channel


class ConvergenceError(Exception):
    """Iterative solve missed the residual target within max_iters."""


@dataclass(frozen=True)
class DecomposeParams:
    """Decomposition knobs.

    lam       : smoothing strength (0 keeps the channel-max guess)
    eps_w     : stabilizer inside the edge weights
    eps_l     : illumination floor, keeps the division well defined
    tol       : relative residual target for the solve
    max_iters : conjugate-gradient iteration cap
    """

    lam: float = 0.15
    eps_w: float = 1e-3
    eps_l: float = 1e-3
    tol: float = 1e-5
    max_iters: int = 200

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.eps_w <= 0:
            raise ValueError("eps_w must be positive")
        if not 0 < self.eps_l < 1:
            raise ValueError("eps_l must lie in (0, 1)")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass(frozen=True)
class RetinexPair:
    illumination: Plane
    reflection: RgbImage

    def __post_init__(self) -> None:
        li, r = self.illumination, self.reflection
        if (li.height, li.width) != (r.height, r.width):
            raise ValueError(
                f"illumination {li.data.shape} and reflection "
                f"{r.data.shape[:2]} dimensions differ"
            )


def total_variation(arr: np.ndarray) -> float:
    """Sum of absolute forward differences; the smoothing regression guard."""
    return float(np.abs(np.diff(arr, axis=0)).sum() + np.abs(np.diff(arr, axis=1)).sum())


def _smoothing_matrix(l0: np.ndarray, lam: float, eps_w: float) -> sp.csr_matrix:
    h, w = l0.shape
    n = h * w
    ids = np.arange(n).reshape(h, w)
    rows, cols, vals = [], [], []

    def add_terms(a: np.ndarray, b: np.ndarray, wt: np.ndarray) -> None:
        # each gradient term w*(l_b - l_a)^2 contributes a 2x2 block
        rows.extend((a, b, a, b))
        cols.extend((a, b, b, a))
        vals.extend((wt, wt, -wt, -wt))

    if w > 1:
        wx = lam / (np.abs(l0[:, 1:] - l0[:, :-1]) + eps_w)
        add_terms(ids[:, :-1].ravel(), ids[:, 1:].ravel(), wx.ravel())
    if h > 1:
        wy = lam / (np.abs(l0[1:, :] - l0[:-1, :]) + eps_w)
        add_terms(ids[:-1, :].ravel(), ids[1:, :].ravel(), wy.ravel())
    if not rows:
        return sp.identity(n, format="csr")
    g = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return (sp.identity(n) + g).tocsr()


def wls_solve(
    l0: Plane,
    lam: float,
    eps_w: float = 1e-3,
    tol: float = 1e-5,
    max_iters: int = 200,
) -> Plane:
    """Edge-weighted least-squares smoothing of the guess plane."""
    if lam == 0:
        return l0
    b = l0.data.ravel()
    A = _smoothing_matrix(l0.data, lam, eps_w)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:  # zero guess: the minimizer is identically zero
        return l0
    x, _info = cg(A, b, x0=b.copy(), rtol=tol, maxiter=max_iters)
    residual = float(np.linalg.norm(b - A @ x)) / b_norm
    if residual > tol:
        raise ConvergenceError(
            f"smoothing solve stopped after {max_iters} iterations with "
            f"relative residual {residual:.3e} > {tol:.1e}"
        )
    return Plane(x.reshape(l0.data.shape))


def decompose(img: RgbImage, params: DecomposeParams = DecomposeParams()) -> RetinexPair:
    """Split img into illumination x reflection with exact reconstruction."""
    l0 = max_channel(img)
    smooth = wls_solve(l0, params.lam, params.eps_w, params.tol, params.max_iters)
    # force the solve's under/overshoots back above the channel max so the
    # division below cannot exceed 1
    lum = np.clip(np.maximum(smooth.data, l0.data), params.eps_l, 1.0)
    refl = np.clip(img.data / lum[:, :, None], 0.0, 1.0)
    return RetinexPair(Plane(lum), RgbImage(refl))


def reconstruct(pair: RetinexPair) -> RgbImage:
    """Pointwise product of the pair, clamped to the unit range."""
    out = pair.illumination.data[:, :, None] * pair.reflection.data
    return RgbImage(np.clip(out, 0.0, 1.0))
