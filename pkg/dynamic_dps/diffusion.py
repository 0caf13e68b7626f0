"""
Variance-preserving diffusion schedule and an exact Gaussian-mixture score.

The marginal of the forward process started from the mixture prior is again
a mixture, p_t = sum_k w_k N(sqrt(abar_t) mu_k, v_t I) with
v_t = abar_t sigma_p^2 + 1 - abar_t, so its score is available in closed form.
"""

import hashlib
import logging
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence, runtime_checkable

import numpy as np
from numpy.typing import NDArray
from scipy.special import logsumexp

from dynamic_dps.config import ScheduleConfig
from dynamic_dps.constants import FINGERPRINT_LENGTH
from dynamic_dps.exceptions import ValidationError
from dynamic_dps.image import Image

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    """Linear beta schedule; index t in [0, T) addresses beta, alpha and alpha_bar."""

    beta: NDArray[np.float64]
    alpha: NDArray[np.float64]
    alpha_bar: NDArray[np.float64]

    @property
    def num_steps(self) -> int:
        return int(self.beta.size)

    def check_t(self, t: int, lo: int = 0) -> int:
        if not lo <= t < self.num_steps:
            raise ValidationError(
                f"time step {t} out of range [{lo}, {self.num_steps})",
                context={"parameter_name": "t", "parameter_value": t},
            )
        return int(t)

    def marginal_variance(self, t: int, sigma_p: float) -> float:
        ab = self.alpha_bar[t]
        return float(ab * sigma_p**2 + (1.0 - ab))

    def posterior_variance(self, t: int) -> float:
        """beta_tilde_t = beta_t (1 - abar_{t-1}) / (1 - abar_t)."""
        return float(self.beta[t] * (1.0 - self.alpha_bar[t - 1]) / (1.0 - self.alpha_bar[t]))


def make_schedule(num_steps: int, beta_min: float, beta_max: float) -> DiffusionSchedule:
    if num_steps < 2 or not 0 < beta_min < beta_max < 1:
        raise ValidationError(
            f"invalid schedule: T={num_steps}, beta_min={beta_min}, beta_max={beta_max}",
            context={"parameter_name": "schedule", "parameter_value": (num_steps, beta_min, beta_max)},
        )
    beta = np.linspace(beta_min, beta_max, num_steps, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    logger.debug(f"Schedule T={num_steps}: alpha_bar[0]={alpha_bar[0]:.6f}, alpha_bar[-1]={alpha_bar[-1]:.3e}")
    return DiffusionSchedule(beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def schedule_from_config(cfg: ScheduleConfig) -> DiffusionSchedule:
    return make_schedule(cfg.num_steps, cfg.beta_min, cfg.beta_max)


@runtime_checkable
class ScoreModel(Protocol):
    """Anything that returns grad log p_t(x) for a schedule."""

    def score(self, x: Image, t: int, sched: DiffusionSchedule) -> Image:
        ...


@dataclass(frozen=True, eq=False)
class GaussianMixturePrior:
    """
    Isotropic Gaussian mixture over images.

    Attributes:
        templates: Component means, shape (K, height, width)
        weights: Component weights, positive and summing to 1
        sigma_p: Per-component standard deviation
    """

    templates: NDArray[np.float64]
    weights: NDArray[np.float64]
    sigma_p: float

    def __post_init__(self) -> None:
        templates = np.asarray(self.templates, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if templates.ndim != 3 or templates.shape[0] < 1:
            raise ValidationError(
                f"templates must have shape (K, h, w), got {templates.shape}",
                context={"parameter_name": "templates", "parameter_value": templates.shape},
            )
        if weights.shape != (templates.shape[0],) or np.any(weights <= 0):
            raise ValidationError(
                "weights must be positive with one entry per template",
                context={"parameter_name": "weights", "parameter_value": weights.tolist()},
            )
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValidationError(
                f"weights must sum to 1, got {weights.sum()!r}",
                context={"parameter_name": "weights", "parameter_value": weights.tolist()},
            )
        if self.sigma_p <= 0:
            raise ValidationError(
                f"sigma_p must be positive, got {self.sigma_p}",
                context={"parameter_name": "sigma_p", "parameter_value": self.sigma_p},
            )
        object.__setattr__(self, "templates", templates)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, templates: Sequence[Image], sigma_p: float) -> "GaussianMixturePrior":
        stacked = np.stack([np.asarray(t, dtype=np.float64) for t in templates])
        k = stacked.shape[0]
        return cls(templates=stacked, weights=np.full(k, 1.0 / k), sigma_p=sigma_p)

    @property
    def n_components(self) -> int:
        return int(self.templates.shape[0])

    @property
    def shape(self):
        return self.templates.shape[1:]

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.templates.tobytes())
        digest.update(self.weights.tobytes())
        digest.update(repr(float(self.sigma_p)).encode("utf-8"))
        return digest.hexdigest()[:FINGERPRINT_LENGTH]

    def score(self, x: Image, t: int, sched: DiffusionSchedule) -> Image:
        return gmm_score(self, x, t, sched)


def _component_log_terms(prior: GaussianMixturePrior, x: Image, t: int, sched: DiffusionSchedule):
    if x.shape != prior.shape:
        raise ValidationError(
            "image dimensions do not match the prior templates",
            context={"shape_a": x.shape, "shape_b": prior.shape},
        )
    sched.check_t(t)
    sqrt_ab = np.sqrt(sched.alpha_bar[t])
    v_t = sched.marginal_variance(t, prior.sigma_p)
    means = sqrt_ab * prior.templates
    sq = np.sum((x[None, :, :] - means) ** 2, axis=(1, 2))
    log_terms = np.log(prior.weights) - sq / (2.0 * v_t) - 0.5 * x.size * np.log(2.0 * np.pi * v_t)
    return log_terms, means, v_t


def gmm_log_density(prior: GaussianMixturePrior, x: Image, t: int, sched: DiffusionSchedule) -> float:
    """Explicit log p_t(x)."""
    log_terms, _, _ = _component_log_terms(prior, x, t, sched)
    return float(logsumexp(log_terms))


def gmm_score(prior: GaussianMixturePrior, x: Image, t: int, sched: DiffusionSchedule) -> Image:
    """grad_x log p_t(x) with log-sum-exp stabilized responsibilities."""
    log_terms, means, v_t = _component_log_terms(prior, x, t, sched)
    resp = np.exp(log_terms - logsumexp(log_terms))
    mean_mix = np.tensordot(resp, means, axes=1)
    return (mean_mix - x) / v_t


def forward_noise(x0: Image, t: int, sched: DiffusionSchedule, seed: int) -> Image:
    """Sample q(x_t | x_0) = N(sqrt(abar_t) x_0, (1 - abar_t) I)."""
    sched.check_t(t)
    ab = sched.alpha_bar[t]
    noise = np.random.default_rng(seed).standard_normal(x0.shape)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


def tweedie_denoise(x_t: Image, t: int, prior: ScoreModel, sched: DiffusionSchedule) -> Image:
    sched.check_t(t)
    ab = sched.alpha_bar[t]
    return (x_t + (1.0 - ab) * prior.score(x_t, t, sched)) / np.sqrt(ab)


def ancestral_step(
    x_t: Image,
    t: int,
    prior: ScoreModel,
    sched: DiffusionSchedule,
    seed: Optional[int],
) -> Image:
    """
    One reverse transition x_t -> x_{t-1} with the small posterior variance.

    No noise is added at t = 1 or when ``seed`` is None.
    """
    sched.check_t(t, lo=1)
    mean = (x_t + sched.beta[t] * prior.score(x_t, t, sched)) / np.sqrt(sched.alpha[t])
    if t == 1 or seed is None:
        return mean
    z = np.random.default_rng(seed).standard_normal(x_t.shape)
    return mean + np.sqrt(sched.posterior_variance(t)) * z
