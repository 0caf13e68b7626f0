"""
Separable correlation with symmetric (edge-inclusive) reflective padding.

``correlate_separable`` and ``correlate_separable_adjoint`` are exact
adjoints of each other: padding is a gather through an index map and its
adjoint folds the padded contributions back with ``np.add.at``.
"""

from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from dynamic_dps.image import Image


def gaussian_kernel1d(sigma: float, radius: int) -> NDArray[np.float64]:
    """Samples of exp(-i^2 / 2 sigma^2) on [-radius, radius], normalized to sum 1."""
    if sigma <= 0 or radius <= 0:
        return np.ones(1)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma**2))
    return kernel / kernel.sum()


def _as_kernel(kernel: Sequence[float]) -> NDArray[np.float64]:
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 1 or kernel.size % 2 == 0:
        raise ValueError(f"kernel must be 1D with odd length, got shape {kernel.shape}")
    return kernel


def _pad_index(n: int, radius: int) -> NDArray[np.intp]:
    return np.pad(np.arange(n), radius, mode="symmetric")


def correlate_axis(x: NDArray[np.float64], kernel: Sequence[float], axis: int) -> NDArray[np.float64]:
    kernel = _as_kernel(kernel)
    radius = kernel.size // 2
    if radius == 0:
        return x * kernel[0]
    n = x.shape[axis]
    padded = x.take(_pad_index(n, radius), axis=axis)
    out = ndimage.correlate1d(padded, kernel, axis=axis, mode="constant", cval=0.0)
    return np.take(out, np.arange(radius, radius + n), axis=axis)


def correlate_axis_adjoint(y: NDArray[np.float64], kernel: Sequence[float], axis: int) -> NDArray[np.float64]:
    kernel = _as_kernel(kernel)
    radius = kernel.size // 2
    if radius == 0:
        return y * kernel[0]
    n = y.shape[axis]
    moved = np.moveaxis(y, axis, 0)
    embedded = np.zeros((n + 2 * radius,) + moved.shape[1:])
    embedded[radius : radius + n] = moved
    spread = ndimage.correlate1d(embedded, kernel[::-1], axis=0, mode="constant", cval=0.0)
    folded = np.zeros_like(moved)
    np.add.at(folded, _pad_index(n, radius), spread)
    return np.moveaxis(folded, 0, axis)


def correlate_separable(x: Image, kernel_rows: Sequence[float], kernel_cols: Sequence[float]) -> Image:
    """Correlate along rows (axis 0) with ``kernel_rows``, then along columns."""
    return correlate_axis(correlate_axis(x, kernel_rows, 0), kernel_cols, 1)


def correlate_separable_adjoint(y: Image, kernel_rows: Sequence[float], kernel_cols: Sequence[float]) -> Image:
    return correlate_axis_adjoint(correlate_axis_adjoint(y, kernel_cols, 1), kernel_rows, 0)
