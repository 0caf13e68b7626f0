"""
Image-quality metrics, hallucination decomposition and relative volume error.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage

from dynamic_dps.config import ConsistencyWeights, DegradationConfig
from dynamic_dps.consistency import ssim_map
from dynamic_dps.constants import (
    DEFAULT_DILATION_RADIUS,
    DEFAULT_PINV_EPS,
    DEFAULT_PINV_MAX_ITER,
    DEFAULT_PINV_TOL,
    PSNR_INFINITY,
)
from dynamic_dps.degradation import apply_linear, pseudo_inverse_apply
from dynamic_dps.exceptions import MetricError
from dynamic_dps.image import Image, l2_sq, require_same_shape

logger = logging.getLogger(__name__)


def psnr(a: Image, b: Image, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE); +inf when the images are identical."""
    require_same_shape(a, b)
    mse = l2_sq(a, b) / a.size
    if mse == 0.0:
        return PSNR_INFINITY
    return float(10.0 * np.log10(peak**2 / mse))


def ssim_aggregate(a: Image, b: Image, w: ConsistencyWeights) -> float:
    return float(np.mean(ssim_map(a, b, w)))


@dataclass(frozen=True)
class HallucinationReport:
    """
    Attributes:
        intrinsic: ||A x_hat - A x_true|| in measurement space
        extrinsic: ||(I - A+ A)(x_hat - x_true)|| in image space
        eps_used: Tikhonov regularization of A+
        converged: Whether the pseudo-inverse solve converged
    """

    intrinsic: float
    extrinsic: float
    eps_used: float
    converged: bool = True


def null_space_component(
    d: Image,
    cfg: DegradationConfig,
    eps: float = DEFAULT_PINV_EPS,
    max_iter: int = DEFAULT_PINV_MAX_ITER,
    tol: float = DEFAULT_PINV_TOL,
) -> Tuple[Image, bool]:
    """(I - A+ A) d with the linear part of the operator."""
    pinv = pseudo_inverse_apply(apply_linear(d, cfg), cfg, eps=eps, max_iter=max_iter, tol=tol, out_dims=d.shape)
    return d - pinv.x, pinv.converged


def hallucination_decompose(
    x_hat: Image,
    x_true: Image,
    cfg: DegradationConfig,
    eps: float = DEFAULT_PINV_EPS,
    max_iter: int = DEFAULT_PINV_MAX_ITER,
    tol: float = DEFAULT_PINV_TOL,
) -> HallucinationReport:
    """Split the error into a measurement-visible part and a null-space part (linear operator only)."""
    require_same_shape(x_hat, x_true, "estimate and truth")
    d = x_hat - x_true
    intrinsic = float(np.sqrt(l2_sq(apply_linear(x_hat, cfg), apply_linear(x_true, cfg))))
    residual, converged = null_space_component(d, cfg, eps, max_iter, tol)
    if not converged:
        logger.warning("Extrinsic component computed from a non-converged pseudo-inverse")
    return HallucinationReport(
        intrinsic=intrinsic,
        extrinsic=float(np.linalg.norm(residual)),
        eps_used=eps,
        converged=converged,
    )


def rve_from_volumes(v_pred: float, v_gt: float) -> float:
    """2 |V_pred - V_gt| / (V_pred + V_gt)."""
    total = v_pred + v_gt
    if total <= 0:
        raise MetricError(
            "relative volume error undefined for an empty region",
            context={"metric": "rve", "v_pred": v_pred, "v_gt": v_gt},
        )
    return float(2.0 * abs(v_pred - v_gt) / total)


def _disk(radius: int) -> np.ndarray:
    offsets = np.arange(-radius, radius + 1)
    return offsets[:, None] ** 2 + offsets[None, :] ** 2 <= radius**2


def region_volume_error(
    x_hat: Image,
    labels_true: np.ndarray,
    class_id: int,
    thresholds: Tuple[float, float],
    dilation_radius: int = DEFAULT_DILATION_RADIUS,
) -> float:
    """
    RVE of one class, segmenting x_hat by its intensity band.

    Predicted pixels count only inside the true region dilated by a disk of
    ``dilation_radius``.
    """
    require_same_shape(x_hat, labels_true, "estimate and label map")
    lo, hi = thresholds
    region = labels_true == class_id
    if dilation_radius > 0:
        region_mask = ndimage.binary_dilation(region, structure=_disk(dilation_radius))
    else:
        region_mask = region
    in_band = (x_hat >= lo) & (x_hat <= hi)
    v_pred = float(np.count_nonzero(in_band & region_mask))
    v_gt = float(np.count_nonzero(region))
    try:
        return rve_from_volumes(v_pred, v_gt)
    except MetricError as e:
        e.context["class_id"] = class_id
        raise
