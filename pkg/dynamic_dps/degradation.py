"""
Forward degradation operator y = Blur(DS_k(Gamma(x))) + n.

The linear part ``apply_linear`` (blur after block-mean downsampling) has an
exact adjoint and a Tikhonov-regularized pseudo-inverse used by the
hallucination decomposition. The composition order is Gamma innermost and
Blur outermost.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from dynamic_dps.config import DegradationConfig
from dynamic_dps.constants import (
    DEFAULT_GAMMA_FLOOR,
    DEFAULT_PINV_EPS,
    DEFAULT_PINV_MAX_ITER,
    DEFAULT_PINV_TOL,
)
from dynamic_dps.exceptions import ValidationError
from dynamic_dps.filters import (
    correlate_separable,
    correlate_separable_adjoint,
    gaussian_kernel1d,
)
from dynamic_dps.image import Image, as_image

logger = logging.getLogger(__name__)


def _check_gamma(gamma: float) -> None:
    if gamma <= 0:
        raise ValidationError(
            f"gamma must be positive, got {gamma}",
            context={"parameter_name": "gamma", "parameter_value": gamma},
        )


def gamma_transform(x: Image, gamma: float, floor: float = DEFAULT_GAMMA_FLOOR) -> Image:
    """
    Pointwise max(x, floor) ** gamma.

    gamma == 1 is the exact identity (no clamp), which keeps A linear for
    the conjugate-Gaussian and pure-L2 reductions.
    """
    _check_gamma(gamma)
    if gamma == 1.0:
        return np.array(x, dtype=np.float64, copy=True)
    return np.maximum(x, floor) ** gamma


def gamma_jacobian_diag(x: Image, gamma: float, floor: float = DEFAULT_GAMMA_FLOOR) -> Image:
    """Diagonal of d gamma_transform / dx (the clamp is treated as inactive)."""
    _check_gamma(gamma)
    if gamma == 1.0:
        return np.ones_like(x, dtype=np.float64)
    return gamma * np.maximum(x, floor) ** (gamma - 1.0)


def gaussian_blur(x: Image, sigma: float, radius: int) -> Image:
    if radius < 0:
        raise ValidationError(
            f"blur radius must be non-negative, got {radius}",
            context={"parameter_name": "blur_radius", "parameter_value": radius},
        )
    kernel = gaussian_kernel1d(sigma, radius)
    if kernel.size == 1:
        return np.array(x, dtype=np.float64, copy=True)
    return correlate_separable(x, kernel, kernel)


def gaussian_blur_adjoint(y: Image, sigma: float, radius: int) -> Image:
    kernel = gaussian_kernel1d(sigma, radius)
    if kernel.size == 1:
        return np.array(y, dtype=np.float64, copy=True)
    return correlate_separable_adjoint(y, kernel, kernel)


def _check_divisible(shape: Tuple[int, ...], k: int) -> None:
    if k < 1 or shape[0] % k or shape[1] % k:
        raise ValidationError(
            f"factor {k} must divide image dimensions {shape}",
            context={"parameter_name": "factor_k", "parameter_value": k, "shape_a": shape},
        )


def downsample(x: Image, k: int) -> Image:
    """Block mean over k x k tiles."""
    _check_divisible(x.shape, k)
    if k == 1:
        return np.array(x, dtype=np.float64, copy=True)
    h, w = x.shape
    return x.reshape(h // k, k, w // k, k).mean(axis=(1, 3))


def downsample_adjoint(y: Image, k: int) -> Image:
    """Replicate each pixel into a k x k block, scaled by 1/k^2."""
    if k == 1:
        return np.array(y, dtype=np.float64, copy=True)
    return np.repeat(np.repeat(y, k, axis=0), k, axis=1) / float(k * k)


def measurement_shape(shape: Tuple[int, int], cfg: DegradationConfig) -> Tuple[int, int]:
    _check_divisible(shape, cfg.factor_k)
    return shape[0] // cfg.factor_k, shape[1] // cfg.factor_k


def apply_linear(x: Image, cfg: DegradationConfig) -> Image:
    """Blur(DS_k(x)) without gamma or noise."""
    return gaussian_blur(downsample(x, cfg.factor_k), cfg.blur_sigma, cfg.blur_radius)


def apply_linear_adjoint(y: Image, cfg: DegradationConfig, out_dims: Tuple[int, int]) -> Image:
    expected = measurement_shape(tuple(out_dims), cfg)
    if y.shape != expected:
        raise ValidationError(
            f"measurement shape {y.shape} inconsistent with image shape {tuple(out_dims)}",
            context={"shape_a": y.shape, "shape_b": expected},
        )
    return downsample_adjoint(gaussian_blur_adjoint(y, cfg.blur_sigma, cfg.blur_radius), cfg.factor_k)


def apply_forward(x: Image, cfg: DegradationConfig, seed: Optional[int] = None) -> Image:
    """
    Simulate a measurement.

    Args:
        x: High-quality image
        cfg: Degradation parameters
        seed: When given, adds N(0, noise_sigma^2) noise from this seed

    Returns:
        The degraded image of shape (h/k, w/k)
    """
    y = apply_linear(gamma_transform(x, cfg.gamma, cfg.gamma_floor), cfg)
    if seed is not None and cfg.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        y = y + cfg.noise_sigma * rng.standard_normal(y.shape)
    return y


@dataclass
class PseudoInverseResult:
    """
    Outcome of the regularized least-squares solve.

    Attributes:
        x: Approximate solution of (A^T A + eps I) x = A^T y
        converged: Whether the relative residual dropped below tol
        iterations: Number of Krylov iterations performed
        residual_history: Relative residual norm before each iteration and at the end
    """

    x: Image
    converged: bool
    iterations: int
    residual_history: List[float] = field(default_factory=list)


def pseudo_inverse_apply(
    y: Image,
    cfg: DegradationConfig,
    eps: float = DEFAULT_PINV_EPS,
    max_iter: int = DEFAULT_PINV_MAX_ITER,
    tol: float = DEFAULT_PINV_TOL,
    out_dims: Optional[Tuple[int, int]] = None,
) -> PseudoInverseResult:
    """
    Apply the Tikhonov pseudo-inverse A+ = (A^T A + eps I)^-1 A^T.

    Solved with the conjugate-residual iteration, which needs one operator
    application per step and keeps the residual norm non-increasing.
    """
    if eps <= 0:
        raise ValidationError(
            f"eps must be positive, got {eps}",
            context={"parameter_name": "eps", "parameter_value": eps},
        )
    y = as_image(y, "y")
    k = cfg.factor_k
    out_dims = tuple(out_dims) if out_dims is not None else (y.shape[0] * k, y.shape[1] * k)

    def normal_op(v: Image) -> Image:
        return apply_linear_adjoint(apply_linear(v, cfg), cfg, out_dims) + eps * v

    b = apply_linear_adjoint(y, cfg, out_dims)
    b_norm = float(np.linalg.norm(b))
    x = np.zeros(out_dims)
    if b_norm == 0.0:
        return PseudoInverseResult(x=x, converged=True, iterations=0, residual_history=[0.0])

    r = b.copy()
    mr = normal_op(r)
    p = r.copy()
    mp = mr.copy()
    r_mr = float(np.vdot(r, mr))
    history = [1.0]
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        mp_sq = float(np.vdot(mp, mp))
        if mp_sq == 0.0:
            break
        step = r_mr / mp_sq
        x += step * p
        r -= step * mp
        rel = np.linalg.norm(r) / b_norm
        history.append(float(rel))
        if rel < tol:
            converged = True
            break
        mr = normal_op(r)
        r_mr_new = float(np.vdot(r, mr))
        beta = r_mr_new / r_mr
        r_mr = r_mr_new
        p = r + beta * p
        mp = mr + beta * mp

    if not converged:
        logger.warning(
            f"Pseudo-inverse did not converge after {iterations} iterations "
            f"(relative residual {history[-1]:.3e}, tol {tol:.1e})"
        )
    else:
        logger.debug(f"Pseudo-inverse converged in {iterations} iterations")
    return PseudoInverseResult(x=x, converged=converged, iterations=iterations, residual_history=history)
