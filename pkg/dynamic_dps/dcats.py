# dynamic_dps/dcats.py

"""
Data-consistency-aware time selection.

A memory bank stores, for each grid time t, the mean measurement
log-likelihood of Tweedie estimates of forward-noised reference images. A
test prediction is started at the grid time whose bank value best matches
its tau-scaled log-likelihood.
"""

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from dynamic_dps.config import DcatsParams, DegradationConfig, canonical_fingerprint
from dynamic_dps.degradation import apply_forward
from dynamic_dps.diffusion import DiffusionSchedule, ScoreModel, forward_noise, tweedie_denoise
from dynamic_dps.exceptions import ValidationError
from dynamic_dps.image import Image, l2_sq, require_same_shape
from dynamic_dps.seeding import derive_seed

logger = logging.getLogger(__name__)

ReferencePair = Tuple[Image, Image]


def measurement_loglik(y: Image, x0_hat: Image, cfg: DegradationConfig) -> float:
    """Per-pixel Gaussian log-likelihood -||y - A(x0)||^2 / (2 sigma_n^2 M), constants dropped."""
    if cfg.noise_sigma <= 0:
        raise ValidationError(
            "measurement log-likelihood needs noise_sigma > 0",
            context={"parameter_name": "noise_sigma", "parameter_value": cfg.noise_sigma},
        )
    z = apply_forward(x0_hat, cfg)
    require_same_shape(y, z, "measurement and degraded estimate")
    return -l2_sq(y, z) / (2.0 * cfg.noise_sigma**2 * y.size)


def bank_fingerprint(
    cfg: DegradationConfig, sched: DiffusionSchedule, prior: ScoreModel, params: DcatsParams
) -> str:
    """Fingerprint of everything a bank depends on: degradation, schedule, prior and draw settings."""
    items = {f"degradation.{k}": v for k, v in asdict(cfg).items()}
    items.update(
        {
            "schedule.num_steps": sched.num_steps,
            "schedule.beta_min": float(sched.beta[0]),
            "schedule.beta_max": float(sched.beta[-1]),
            "dcats.stride": params.stride_for(sched.num_steps),
            "dcats.n_draws": params.n_draws,
            "dcats.bank_seed": params.bank_seed,
        }
    )
    prior_fingerprint = getattr(prior, "fingerprint", None)
    items["prior"] = prior_fingerprint() if callable(prior_fingerprint) else type(prior).__name__
    return canonical_fingerprint(items)


def make_t_grid(num_steps: int, stride: int) -> NDArray[np.int64]:
    return np.arange(1, num_steps, stride, dtype=np.int64)


@dataclass
class BankMeta:
    n_refs: int
    n_draws: int
    noise_sigma: float
    n_evaluations: int = 0
    fingerprint: str = ""


@dataclass
class MemoryBank:
    """
    Attributes:
        t_grid: Strictly increasing grid times in [1, T)
        avg_loglik: Mean reference log-likelihood per grid time
        se: Standard error of each mean
        meta: Build provenance
    """

    t_grid: NDArray[np.int64]
    avg_loglik: NDArray[np.float64]
    se: NDArray[np.float64]
    meta: BankMeta = field(default_factory=lambda: BankMeta(n_refs=1, n_draws=1, noise_sigma=0.0))

    def __post_init__(self) -> None:
        self.t_grid = np.asarray(self.t_grid, dtype=np.int64)
        self.avg_loglik = np.asarray(self.avg_loglik, dtype=np.float64)
        self.se = np.asarray(self.se, dtype=np.float64)
        if self.t_grid.size == 0:
            raise ValidationError("memory bank is empty", context={"parameter_name": "t_grid"})
        if self.avg_loglik.shape != self.t_grid.shape or self.se.shape != self.t_grid.shape:
            raise ValidationError(
                "memory bank columns must have equal length",
                context={"shape_a": self.t_grid.shape, "shape_b": self.avg_loglik.shape},
            )
        if np.any(np.diff(self.t_grid) <= 0) or self.t_grid[0] < 1:
            raise ValidationError(
                "memory bank times must be strictly increasing and >= 1",
                context={"parameter_name": "t_grid", "parameter_value": self.t_grid.tolist()},
            )

    def __len__(self) -> int:
        return int(self.t_grid.size)


def build_memory_bank(
    refs: Sequence[ReferencePair],
    prior: ScoreModel,
    sched: DiffusionSchedule,
    cfg: DegradationConfig,
    params: DcatsParams,
    n_draws: Optional[int] = None,
    seed: Optional[int] = None,
) -> MemoryBank:
    """
    Average measurement log-likelihood of reference Tweedie estimates per grid time.

    Draw (t, ref i, draw j) uses the seed derived from (seed, t, i, j), and
    sums are accumulated refs outer, draws inner. The bank records the
    fingerprint of its inputs.
    """
    if not refs:
        raise ValidationError("reference set is empty", context={"parameter_name": "refs", "parameter_value": 0})
    n_draws = params.n_draws if n_draws is None else n_draws
    seed = params.bank_seed if seed is None else seed
    if n_draws < 1:
        raise ValidationError(
            f"n_draws must be >= 1, got {n_draws}",
            context={"parameter_name": "n_draws", "parameter_value": n_draws},
        )

    t_grid = make_t_grid(sched.num_steps, params.stride_for(sched.num_steps))
    means: List[float] = []
    errors: List[float] = []
    n_evaluations = 0
    for t in t_grid:
        values = []
        for i, (x_ref, y_ref) in enumerate(refs):
            for j in range(n_draws):
                x_t = forward_noise(x_ref, int(t), sched, derive_seed(seed, int(t), i, j))
                x0_hat = tweedie_denoise(x_t, int(t), prior, sched)
                values.append(measurement_loglik(y_ref, x0_hat, cfg))
                n_evaluations += 1
        samples = np.asarray(values)
        means.append(float(samples.mean()))
        errors.append(float(samples.std(ddof=1) / np.sqrt(samples.size)) if samples.size > 1 else 0.0)
        logger.debug(f"Bank t={t}: avg_loglik={means[-1]:.4f} (se {errors[-1]:.4f})")

    meta = BankMeta(
        n_refs=len(refs),
        n_draws=n_draws,
        noise_sigma=cfg.noise_sigma,
        n_evaluations=n_evaluations,
        fingerprint=bank_fingerprint(cfg, sched, prior, replace(params, n_draws=n_draws, bank_seed=seed)),
    )
    logger.info(f"Built memory bank: {t_grid.size} grid times, {len(refs)} refs x {n_draws} draws")
    return MemoryBank(t_grid=t_grid, avg_loglik=np.asarray(means), se=np.asarray(errors), meta=meta)


def select_time(
    bank: MemoryBank,
    y: Image,
    x_cond: Image,
    cfg: DegradationConfig,
    params: DcatsParams,
) -> int:
    """argmin over the grid of |tau * loglik(y, x_cond) - avg_loglik(t)|, ties to the smaller t."""
    target = params.tau * measurement_loglik(y, x_cond, cfg)
    distance = np.abs(target - bank.avg_loglik)
    t_star = int(bank.t_grid[int(np.argmin(distance))])
    if target > bank.avg_loglik.max():
        logger.debug(f"Scaled loglik {target:.4f} is above every bank entry, start clipped to t={t_star}")
    elif target < bank.avg_loglik.min():
        logger.debug(f"Scaled loglik {target:.4f} is below every bank entry, start clipped to t={t_star}")
    else:
        logger.debug(f"Selected start time t={t_star} (scaled loglik {target:.4f})")
    return t_star

