# dynamic_dps/phantom.py

"""
Synthetic brain-like phantoms with known label maps.

Each template is a "skull" ellipse of gray tissue holding a white-tissue
ellipse with 2 to 4 small deep structures inside. Intensities are the
centers of the class bands. Test and reference truths are exact draws
from the Gaussian mixture built on the templates.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from dynamic_dps.config import DegradationConfig, PhantomSpec
from dynamic_dps.constants import TissueClass
from dynamic_dps.degradation import apply_forward, measurement_shape
from dynamic_dps.diffusion import GaussianMixturePrior
from dynamic_dps.exceptions import ValidationError
from dynamic_dps.image import Image
from dynamic_dps.seeding import derive_seed

logger = logging.getLogger(__name__)

LabelMap = NDArray[np.int64]

# candidate centers of the deep structures, in [-1, 1] image coordinates
DEEP_SLOTS: Tuple[Tuple[float, float], ...] = ((-0.32, -0.18), (0.32, -0.18), (-0.2, 0.25), (0.2, 0.25))


def _ellipse_mask(
    xx: NDArray[np.float64],
    yy: NDArray[np.float64],
    center: Tuple[float, float],
    axes: Tuple[float, float],
    theta: float = 0.0,
) -> NDArray[np.bool_]:
    x0, y0 = center
    a, b = axes
    c, s = np.cos(theta), np.sin(theta)
    u = (xx - x0) * c + (yy - y0) * s
    v = -(xx - x0) * s + (yy - y0) * c
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def generate_template(spec: PhantomSpec, index: int) -> Tuple[Image, LabelMap]:
    """Deterministic template ``index`` of the phantom family and its label map."""
    if not 0 <= index < spec.n_templates:
        raise ValidationError(
            f"template index {index} out of range [0, {spec.n_templates})",
            context={"parameter_name": "index", "parameter_value": index},
        )
    rng = np.random.default_rng(derive_seed(spec.phantom_seed, index))
    grid = np.linspace(-1.0, 1.0, spec.image_size)
    xx, yy = np.meshgrid(grid, grid)

    labels = np.full(xx.shape, int(TissueClass.BACKGROUND), dtype=np.int64)

    skull = _ellipse_mask(
        xx,
        yy,
        center=tuple(rng.uniform(-0.02, 0.02, size=2)),
        axes=(0.80 + rng.uniform(-0.04, 0.04), 0.90 + rng.uniform(-0.04, 0.04)),
    )
    labels[skull] = TissueClass.GRAY

    white = _ellipse_mask(
        xx,
        yy,
        center=tuple(rng.uniform(-0.03, 0.03, size=2)),
        axes=(0.50 + rng.uniform(-0.05, 0.05), 0.60 + rng.uniform(-0.05, 0.05)),
        theta=np.deg2rad(rng.uniform(-10.0, 10.0)),
    )
    labels[white & skull] = TissueClass.WHITE

    n_deep = int(rng.integers(2, 5))
    for slot in rng.permutation(len(DEEP_SLOTS))[:n_deep]:
        cx, cy = DEEP_SLOTS[slot]
        deep = _ellipse_mask(
            xx,
            yy,
            center=(cx + rng.uniform(-0.03, 0.03), cy + rng.uniform(-0.03, 0.03)),
            axes=tuple(rng.uniform(0.10, 0.12, size=2)),
            theta=rng.uniform(0.0, np.pi),
        )
        labels[deep & skull] = TissueClass.DEEP

    centers = np.array([spec.band_center(c) for c in range(spec.n_classes)])
    image = centers[labels]
    return image, labels


def build_prior(spec: PhantomSpec) -> Tuple[GaussianMixturePrior, List[LabelMap]]:
    """Uniform mixture over all templates, with the label map of each component."""
    images, label_maps = zip(*(generate_template(spec, k) for k in range(spec.n_templates)))
    prior = GaussianMixturePrior.uniform(images, spec.sigma_p)
    logger.info(f"Built phantom prior: K={prior.n_components}, size={spec.image_size}, sigma_p={spec.sigma_p}")
    return prior, list(label_maps)


def draw_truth(
    templates: NDArray[np.float64],
    sigma_p: float,
    seed: int,
    weights: Optional[Sequence[float]] = None,
) -> Tuple[Image, int]:
    """Pick component k with probability w_k, add N(0, sigma_p^2 I), clamp to [0, 1]."""
    rng = np.random.default_rng(seed)
    k = int(rng.choice(templates.shape[0], p=weights))
    noisy = templates[k] + sigma_p * rng.standard_normal(templates.shape[1:])
    return np.clip(noisy, 0.0, 1.0), k


def sample_truth(
    templates: NDArray[np.float64],
    sigma_p: float,
    seed: int,
    weights: Optional[Sequence[float]] = None,
) -> Image:
    return draw_truth(templates, sigma_p, seed, weights)[0]


@dataclass
class Sample:
    """One test or reference record."""

    index: int
    seed: int
    x_true: Image
    y: Image
    labels: LabelMap
    component: int


def noise_seed_for(truth_seed: int) -> int:
    return derive_seed(truth_seed, 1)


def make_dataset(spec: PhantomSpec, cfg: DegradationConfig, n: int, seed: int) -> List[Sample]:
    """
    ``n`` truths with seeds seed, seed + 1, ... degraded by ``cfg``.

    The measurement noise seed depends only on the truth seed, so partitions
    that differ in degradation share truths and noise draws.
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}", context={"parameter_name": "n", "parameter_value": n})
    measurement_shape((spec.image_size, spec.image_size), cfg)
    prior, label_maps = build_prior(spec)
    samples = []
    for i in range(n):
        truth_seed = seed + i
        x_true, k = draw_truth(prior.templates, prior.sigma_p, truth_seed, prior.weights)
        y = apply_forward(x_true, cfg, seed=noise_seed_for(truth_seed))
        samples.append(Sample(index=i, seed=truth_seed, x_true=x_true, y=y, labels=label_maps[k], component=k))
    logger.info(f"Generated {n} samples (seeds {seed}..{seed + n - 1}, gamma={cfg.gamma}, k={cfg.factor_k})")
    return samples
