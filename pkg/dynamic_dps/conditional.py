"""
Phase I conditional models mapping a measurement y to a full-size estimate.

Two models share the ``ConditionalModel`` protocol: a naive bilinear
upsampler with inverse gamma, and a ridge-regression patch model that maps
each low-resolution patch to the k x k block it covers.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence, Tuple, runtime_checkable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray
from scipy import linalg, ndimage

from dynamic_dps.config import DegradationConfig
from dynamic_dps.constants import RIDGE_CLAMP_HI
from dynamic_dps.exceptions import ValidationError
from dynamic_dps.image import Image

logger = logging.getLogger(__name__)

TrainingPair = Tuple[Image, Image]


@runtime_checkable
class ConditionalModel(Protocol):
    def predict(self, y: Image) -> Image:
        ...


def bilinear_upsample(y: Image, k: int) -> Image:
    if k == 1:
        return np.array(y, dtype=np.float64, copy=True)
    return ndimage.zoom(y, k, order=1, mode="nearest")


def naive_predict(y: Image, cfg_assumed: DegradationConfig) -> Image:
    """Bilinear upsampling by k followed by pixel ** (1 / gamma_assumed)."""
    up = bilinear_upsample(y, cfg_assumed.factor_k)
    if cfg_assumed.gamma == 1.0:
        return up
    return np.maximum(up, cfg_assumed.gamma_floor) ** (1.0 / cfg_assumed.gamma)


class NaiveConditional:
    def __init__(self, cfg_assumed: DegradationConfig):
        logger.info(f"Init NaiveConditional with assumed gamma={cfg_assumed.gamma}, k={cfg_assumed.factor_k}")
        self.cfg_assumed = cfg_assumed

    @property
    def scale_k(self) -> int:
        return self.cfg_assumed.factor_k

    def predict(self, y: Image) -> Image:
        return naive_predict(y, self.cfg_assumed)


def _patches(y: Image, patch_in: int) -> NDArray[np.float64]:
    """One row per LF pixel: the symmetric-padded patch around it plus a bias 1."""
    r = patch_in // 2
    padded = np.pad(y, r, mode="symmetric")
    windows = sliding_window_view(padded, (patch_in, patch_in)).reshape(y.size, patch_in * patch_in)
    return np.hstack([windows, np.ones((y.size, 1))])


def _blocks(x: Image, k: int) -> NDArray[np.float64]:
    h, w = x.shape[0] // k, x.shape[1] // k
    return x.reshape(h, k, w, k).transpose(0, 2, 1, 3).reshape(h * w, k * k)


def _assemble(blocks: NDArray[np.float64], lf_shape: Tuple[int, int], k: int) -> Image:
    h, w = lf_shape
    return blocks.reshape(h, w, k, k).transpose(0, 2, 1, 3).reshape(h * k, w * k)


@dataclass
class RidgeModel:
    """
    Linear patch-to-block regressor.

    Attributes:
        patch_in: Odd side of the LF input patch
        scale_k: Upsampling factor
        weights: (patch_in^2 + 1) x k^2 matrix, last row is the bias
        ridge_lambda: Regularization used for the fit
        trained_on: Fingerprint of the training configuration
    """

    patch_in: int
    scale_k: int
    weights: NDArray[np.float64]
    ridge_lambda: float
    trained_on: str = ""

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        expected = (self.patch_in * self.patch_in + 1, self.scale_k * self.scale_k)
        if self.weights.shape != expected:
            raise ValidationError(
                f"ridge weights must have shape {expected}, got {self.weights.shape}",
                context={"shape_a": self.weights.shape, "shape_b": expected},
            )

    def predict(self, y: Image) -> Image:
        return ridge_predict(self, y)


def ridge_fit(
    pairs: Sequence[TrainingPair],
    patch_in: int,
    k: int,
    ridge_lambda: float,
    seed: int = 0,
    max_rows_per_pair: Optional[int] = None,
    trained_on: str = "",
) -> RidgeModel:
    """
    Solve (P^T P + lambda I) W = P^T Q over all (LF patch, HF block) rows.

    Normal equations are accumulated pair by pair in order. When
    ``max_rows_per_pair`` is set, rows are subsampled with a generator seeded
    by ``seed``.
    """
    if not pairs:
        raise ValidationError("ridge_fit needs at least one training pair", context={"parameter_name": "pairs"})
    if ridge_lambda <= 0:
        raise ValidationError(
            f"ridge_lambda must be positive, got {ridge_lambda}",
            context={"parameter_name": "ridge_lambda", "parameter_value": ridge_lambda},
        )
    if patch_in < 1 or patch_in % 2 == 0:
        raise ValidationError(
            f"patch_in must be odd and positive, got {patch_in}",
            context={"parameter_name": "patch_in", "parameter_value": patch_in},
        )

    n_features = patch_in * patch_in + 1
    gram = np.zeros((n_features, n_features))
    cross = np.zeros((n_features, k * k))
    rng = np.random.default_rng(seed)
    for x_hf, y_lf in pairs:
        if x_hf.shape != (y_lf.shape[0] * k, y_lf.shape[1] * k):
            raise ValidationError(
                "training pair dimensions inconsistent with factor k",
                context={"shape_a": x_hf.shape, "shape_b": y_lf.shape, "parameter_value": k},
            )
        p = _patches(y_lf, patch_in)
        q = _blocks(x_hf, k)
        if max_rows_per_pair is not None and max_rows_per_pair < p.shape[0]:
            rows = np.sort(rng.choice(p.shape[0], size=max_rows_per_pair, replace=False))
            p, q = p[rows], q[rows]
        gram += p.T @ p
        cross += p.T @ q

    weights = linalg.solve(gram + ridge_lambda * np.eye(n_features), cross, assume_a="pos")
    logger.info(f"Fitted ridge model on {len(pairs)} pairs (patch_in={patch_in}, k={k}, lambda={ridge_lambda})")
    return RidgeModel(patch_in=patch_in, scale_k=k, weights=weights, ridge_lambda=ridge_lambda, trained_on=trained_on)


def ridge_predict(model: RidgeModel, y: Image, clip: bool = True) -> Image:
    """Tiled block prediction, clamped to [0, 1.2] unless ``clip`` is False."""
    if y.ndim != 2 or y.size == 0:
        raise ValidationError(
            f"ridge_predict needs a 2D image, got shape {y.shape}",
            context={"shape_a": y.shape},
        )
    blocks = _patches(y, model.patch_in) @ model.weights
    out = _assemble(blocks, y.shape, model.scale_k)
    if clip:
        out = np.clip(out, 0.0, RIDGE_CLAMP_HI)
    return out


class GridAdaptedConditional:
    """
    Feeds a conditional model the measurement grid it was trained on.

    Inputs of another size (an unseen downsampling factor) are bilinearly
    resampled to ``image_shape / model_k`` first.
    """

    def __init__(self, model: ConditionalModel, model_k: int, image_shape: Tuple[int, int]):
        self.model = model
        self.model_k = model_k
        self.image_shape = tuple(image_shape)
        self.lf_shape = (self.image_shape[0] // model_k, self.image_shape[1] // model_k)

    def predict(self, y: Image) -> Image:
        if y.shape != self.lf_shape:
            logger.warning(
                f"Resampling measurement from {y.shape} to the model grid {self.lf_shape}"
            )
            factors = (self.lf_shape[0] / y.shape[0], self.lf_shape[1] / y.shape[1])
            y = ndimage.zoom(y, factors, order=1, mode="nearest")
            if y.shape != self.lf_shape:
                raise ValidationError(
                    "measurement could not be resampled to the model grid",
                    context={"shape_a": y.shape, "shape_b": self.lf_shape},
                )
        return self.model.predict(y)
