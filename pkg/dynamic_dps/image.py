"""
Image type and elementwise helpers.

Images are 2D float64 numpy arrays indexed ``[row, col]`` (height, width).
"""

from typing import Any, Tuple

import numpy as np
from numpy.typing import NDArray

from dynamic_dps.exceptions import ValidationError

Image = NDArray[np.float64]


def as_image(data: Any, name: str = "image") -> Image:
    """Coerce to a finite 2D float64 array."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValidationError(
            f"{name} must be a non-empty 2D array, got shape {arr.shape}",
            context={"parameter_name": name, "parameter_value": arr.shape},
        )
    if not np.all(np.isfinite(arr)):
        raise ValidationError(
            f"{name} contains non-finite values",
            context={"parameter_name": name},
        )
    return arr


def require_same_shape(a: Image, b: Image, what: str = "images") -> Tuple[int, int]:
    if a.shape != b.shape:
        raise ValidationError(
            f"Dimension mismatch between {what}",
            shape_a=a.shape,
            shape_b=b.shape,
        )
    return a.shape


def dot(a: Image, b: Image) -> float:
    require_same_shape(a, b)
    return float(np.vdot(a, b))


def l2_sq(a: Image, b: Image) -> float:
    """Squared Euclidean distance sum((a - b)^2)."""
    require_same_shape(a, b)
    diff = a - b
    return float(np.vdot(diff, diff))


def clamp(x: Image, lo: float, hi: float) -> Image:
    if not lo < hi:
        raise ValidationError(
            f"clamp needs lo < hi, got lo={lo}, hi={hi}",
            context={"parameter_name": "lo", "parameter_value": lo},
        )
    return np.clip(x, lo, hi)
