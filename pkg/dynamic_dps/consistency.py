# dynamic_dps/consistency.py

"""
Composite data-consistency loss and its analytic gradient.

L_DC(x0) = ||y - A(x0)||^2
         + lambda1 * mean((Sobel(y) - Sobel(A x0))^2)
         + lambda2 * mean((1 - SSIM(y, A x0))^2)

Edge and SSIM terms are evaluated in measurement space. The gradient with
respect to x_t uses the frozen score Jacobian d x0 / d x_t = I / sqrt(abar_t).
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from dynamic_dps.config import ConsistencyWeights, DegradationConfig
from dynamic_dps.constants import SOBEL_DIFF, SOBEL_EPS, SOBEL_SMOOTH
from dynamic_dps.degradation import (
    apply_forward,
    apply_linear_adjoint,
    gamma_jacobian_diag,
)
from dynamic_dps.diffusion import DiffusionSchedule, ScoreModel, tweedie_denoise
from dynamic_dps.exceptions import ValidationError
from dynamic_dps.filters import (
    correlate_separable,
    correlate_separable_adjoint,
    gaussian_kernel1d,
)
from dynamic_dps.image import Image, l2_sq, require_same_shape

logger = logging.getLogger(__name__)


def _require_min_size(img: Image, size: int, what: str) -> None:
    if img.shape[0] < size or img.shape[1] < size:
        raise ValidationError(
            f"{what} needs images of at least {size}x{size}, got {img.shape}",
            context={"parameter_name": what, "shape_a": img.shape},
        )


def _sobel_components(img: Image) -> Tuple[Image, Image]:
    gx = correlate_separable(img, SOBEL_SMOOTH, SOBEL_DIFF)
    gy = correlate_separable(img, SOBEL_DIFF, SOBEL_SMOOTH)
    return gx, gy


def sobel_magnitude(img: Image) -> Image:
    """Smoothed edge magnitude sqrt(Gx^2 + Gy^2 + eps^2) with unscaled 3x3 Sobel kernels."""
    _require_min_size(img, 3, "sobel_magnitude")
    gx, gy = _sobel_components(img)
    return np.sqrt(gx**2 + gy**2 + SOBEL_EPS**2)


def _ssim_window(w: ConsistencyWeights) -> np.ndarray:
    return gaussian_kernel1d(w.ssim_window / 6.0, w.ssim_window // 2)


@dataclass(frozen=True)
class _SsimMoments:
    mu_a: Image
    mu_b: Image
    a1: Image
    a2: Image
    b1: Image
    b2: Image

    @property
    def ssim(self) -> Image:
        return (self.a1 * self.a2) / (self.b1 * self.b2)


def _ssim_moments(a: Image, b: Image, w: ConsistencyWeights) -> _SsimMoments:
    require_same_shape(a, b, "ssim inputs")
    _require_min_size(a, w.ssim_window, "ssim_map")
    kernel = _ssim_window(w)

    def local_mean(img: Image) -> Image:
        return correlate_separable(img, kernel, kernel)

    mu_a = local_mean(a)
    mu_b = local_mean(b)
    var_a = local_mean(a * a) - mu_a**2
    var_b = local_mean(b * b) - mu_b**2
    cov = local_mean(a * b) - mu_a * mu_b
    return _SsimMoments(
        mu_a=mu_a,
        mu_b=mu_b,
        a1=2.0 * mu_a * mu_b + w.c1,
        a2=2.0 * cov + w.c2,
        b1=mu_a**2 + mu_b**2 + w.c1,
        b2=var_a + var_b + w.c2,
    )


def ssim_map(a: Image, b: Image, w: ConsistencyWeights) -> Image:
    """Per-pixel SSIM with a Gaussian window of std window/6."""
    return _ssim_moments(a, b, w).ssim


def _ssim_loss_grad(a: Image, b: Image, w: ConsistencyWeights, scale: float) -> Image:
    """Gradient w.r.t. b of scale * sum((1 - SSIM(a, b))^2)."""
    kernel = _ssim_window(w)
    mom = _ssim_moments(a, b, w)
    s = mom.ssim
    g = -2.0 * scale * (1.0 - s)
    denom = mom.b1 * mom.b2
    d_mu_b = (2.0 * mom.mu_a * mom.a2 - 2.0 * mom.mu_a * mom.a1) / denom - s * (
        2.0 * mom.mu_b / mom.b1 - 2.0 * mom.mu_b / mom.b2
    )
    d_q_bb = -s / mom.b2
    d_q_ab = 2.0 * mom.a1 / denom

    def adjoint(img: Image) -> Image:
        return correlate_separable_adjoint(img, kernel, kernel)

    return adjoint(g * d_mu_b) + 2.0 * b * adjoint(g * d_q_bb) + a * adjoint(g * d_q_ab)


def _edge_loss_grad(y: Image, z: Image, scale: float) -> Image:
    """Gradient w.r.t. z of scale * sum((S(z) - S(y))^2)."""
    gx, gy = _sobel_components(z)
    mag = np.sqrt(gx**2 + gy**2 + SOBEL_EPS**2)
    u = 2.0 * scale * (mag - sobel_magnitude(y))
    return correlate_separable_adjoint(u * gx / mag, SOBEL_SMOOTH, SOBEL_DIFF) + correlate_separable_adjoint(
        u * gy / mag, SOBEL_DIFF, SOBEL_SMOOTH
    )


@dataclass(frozen=True)
class DcLossTerms:
    """Weighted contributions of the three loss terms."""

    l2: float
    edge: float
    ssim: float

    @property
    def total(self) -> float:
        return self.l2 + self.edge + self.ssim


def _measurement(y: Image, x0_hat: Image, cfg: DegradationConfig) -> Image:
    z = apply_forward(x0_hat, cfg)
    require_same_shape(y, z, "measurement and degraded estimate")
    return z


def dc_loss_terms(y: Image, x0_hat: Image, cfg: DegradationConfig, w: ConsistencyWeights) -> DcLossTerms:
    z = _measurement(y, x0_hat, cfg)
    edge = 0.0
    ssim = 0.0
    if w.lambda1 > 0:
        edge = w.lambda1 * float(np.mean((sobel_magnitude(y) - sobel_magnitude(z)) ** 2))
    if w.lambda2 > 0:
        ssim = w.lambda2 * float(np.mean((1.0 - ssim_map(y, z, w)) ** 2))
    return DcLossTerms(l2=l2_sq(y, z), edge=edge, ssim=ssim)


def dc_loss(y: Image, x0_hat: Image, cfg: DegradationConfig, w: ConsistencyWeights) -> float:
    return dc_loss_terms(y, x0_hat, cfg, w).total


def dc_loss_grad_x0(y: Image, x0_hat: Image, cfg: DegradationConfig, w: ConsistencyWeights) -> Image:
    """Exact gradient of dc_loss with respect to x0_hat."""
    z = _measurement(y, x0_hat, cfg)
    m = float(y.size)
    grad_z = -2.0 * (y - z)
    if w.lambda1 > 0:
        grad_z = grad_z + _edge_loss_grad(y, z, w.lambda1 / m)
    if w.lambda2 > 0:
        grad_z = grad_z + _ssim_loss_grad(y, z, w, w.lambda2 / m)
    back = apply_linear_adjoint(grad_z, cfg, x0_hat.shape)
    return gamma_jacobian_diag(x0_hat, cfg.gamma, cfg.gamma_floor) * back


def dc_gradient(
    y: Image,
    x_t: Image,
    t: int,
    prior: ScoreModel,
    sched: DiffusionSchedule,
    cfg: DegradationConfig,
    w: ConsistencyWeights,
) -> Image:
    """
    Gradient of dc_loss(y, tweedie_denoise(x_t, t)) with respect to x_t.

    The score Jacobian is frozen, so d x0_hat / d x_t is taken as I / sqrt(abar_t).
    """
    x0_hat = tweedie_denoise(x_t, t, prior, sched)
    return dc_loss_grad_x0(y, x0_hat, cfg, w) / np.sqrt(sched.alpha_bar[t])
