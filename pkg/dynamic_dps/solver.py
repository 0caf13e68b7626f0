# dynamic_dps/solver.py

"""
Two-phase reconstruction: a conditional warm start, a data-consistency-aware
start time, then reverse diffusion with line-searched consistency steps.

The vanilla mode is the fixed-step DPS baseline started from pure noise at
T - 1 with a plain L2 consistency term. The unconditional mode runs the
dynamic step from pure noise.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from dynamic_dps.conditional import ConditionalModel
from dynamic_dps.config import ConsistencyWeights, DegradationConfig, SolveParams, WolfeParams
from dynamic_dps.consistency import dc_gradient, dc_loss
from dynamic_dps.constants import SolveMode
from dynamic_dps.dcats import MemoryBank, bank_fingerprint, select_time
from dynamic_dps.diffusion import DiffusionSchedule, ScoreModel, ancestral_step, forward_noise, tweedie_denoise
from dynamic_dps.exceptions import FingerprintMismatchError, ValidationError
from dynamic_dps.image import Image, clamp, dot
from dynamic_dps.linesearch import strong_wolfe
from dynamic_dps.seeding import derive_seed

logger = logging.getLogger(__name__)

# seed stream ids under the run seed
_STEP_STREAM = 0
_INIT_STREAM = 1


def _plain_l2(w: Optional[ConsistencyWeights] = None) -> ConsistencyWeights:
    return replace(w or ConsistencyWeights(), lambda1=0.0, lambda2=0.0)


def dps_step_vanilla(
    x_t: Image,
    t: int,
    y: Image,
    prior: ScoreModel,
    sched: DiffusionSchedule,
    cfg: DegradationConfig,
    rho: float,
    seed: Optional[int] = None,
) -> Image:
    """Ancestral step, then a fixed step of size rho against the plain L2 gradient at t - 1."""
    x_prev = ancestral_step(x_t, t, prior, sched, seed)
    if rho == 0:
        return x_prev
    grad = dc_gradient(y, x_prev, t - 1, prior, sched, cfg, _plain_l2())
    return x_prev - rho * grad


@dataclass(frozen=True)
class StepOutcome:
    """Result of one dynamic step."""

    x: Image
    alpha: float
    ldc: float
    ldc_before: float
    armijo: bool
    curvature: bool
    evals: int


def dynamic_step(
    x_t: Image,
    t: int,
    y: Image,
    prior: ScoreModel,
    sched: DiffusionSchedule,
    cfg: DegradationConfig,
    w: ConsistencyWeights,
    wolfe: WolfeParams,
    seed: Optional[int] = None,
) -> StepOutcome:
    """
    Ancestral step followed by a strong Wolfe step along -dc_gradient.

    phi(alpha) = dc_loss(y, tweedie_denoise(x' + alpha p, t - 1)) with
    phi'(0) = -||g||^2 supplied analytically. A zero gradient or a failed
    search leaves x' unchanged with alpha = 0.
    """
    x_prev = ancestral_step(x_t, t, prior, sched, seed)
    t_prev = t - 1

    def phi(alpha: float) -> float:
        return dc_loss(y, tweedie_denoise(x_prev + alpha * direction, t_prev, prior, sched), cfg, w)

    grad = dc_gradient(y, x_prev, t_prev, prior, sched, cfg, w)
    direction = -grad
    grad_sq = dot(grad, grad)
    ldc_before = dc_loss(y, tweedie_denoise(x_prev, t_prev, prior, sched), cfg, w)

    if not grad_sq > 0:
        logger.debug(f"t={t}: zero consistency gradient, search skipped")
        return StepOutcome(x_prev, 0.0, ldc_before, ldc_before, False, False, 0)

    result = strong_wolfe(phi, None, wolfe, phi0=ldc_before, dphi0=-grad_sq)
    if result.alpha == 0.0:
        logger.warning(f"t={t}: line search found no sufficient decrease, consistency update skipped")
        return StepOutcome(x_prev, 0.0, ldc_before, ldc_before, False, False, result.evals)

    logger.debug(f"t={t}: alpha={result.alpha:.4g}, ldc {ldc_before:.5g} -> {result.phi_alpha:.5g}")
    return StepOutcome(
        x=x_prev + result.alpha * direction,
        alpha=result.alpha,
        ldc=result.phi_alpha,
        ldc_before=ldc_before,
        armijo=result.armijo,
        curvature=result.curvature,
        evals=result.evals,
    )


@dataclass
class SolveReport:
    """
    Trace of one reconstruction.

    Attributes:
        output: Final estimate, clamped to [0, 1]
        t_start: First reverse step
        steps_taken: Number of reverse steps (equals t_start)
        alpha_trace: Step size per reverse step (rho in vanilla mode)
        ldc_trace: Consistency loss after each step (vanilla mode records NaN
            before the last step unless DEBUG logging is on)
        ldc_before_trace: Consistency loss before each update
        armijo_trace: Armijo flag per step
        curvature_trace: Curvature flag per step
        evals_trace: Line-search evaluations per step
        wall_time: Seconds spent in the solve
        mode: Solve mode
        x_cond: Conditional prediction, when one was made
    """

    output: Image
    t_start: int
    steps_taken: int
    alpha_trace: np.ndarray
    ldc_trace: np.ndarray
    wall_time: float
    mode: str = SolveMode.DYNAMIC.value
    ldc_before_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    armijo_trace: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    curvature_trace: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    evals_trace: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    x_cond: Optional[Image] = None


def check_bank(
    bank: MemoryBank,
    cfg: DegradationConfig,
    sched: DiffusionSchedule,
    prior: ScoreModel,
    params: SolveParams,
) -> None:
    expected = bank_fingerprint(cfg, sched, prior, params.dcats)
    if bank.meta.fingerprint != expected:
        raise FingerprintMismatchError(
            "memory bank was built for a different degradation, schedule or prior",
            context={"artifact": "memory bank", "expected": expected, "found": bank.meta.fingerprint},
        )


def solve(
    y: Image,
    conditional: Optional[ConditionalModel],
    prior: ScoreModel,
    sched: DiffusionSchedule,
    cfg: DegradationConfig,
    bank: Optional[MemoryBank],
    params: SolveParams,
) -> SolveReport:
    """
    Reconstruct one image from its measurement.

    Args:
        y: Measurement
        conditional: Phase I model (required in dynamic mode)
        prior: Score provider
        sched: Diffusion schedule
        cfg: Degradation of this measurement
        bank: Memory bank (required in dynamic mode without t_start_override)
        params: Solver parameters

    Returns:
        SolveReport with output = clamp(tweedie_denoise(x_0, 0), 0, 1)

    Raises:
        FingerprintMismatchError: If the bank was built for other inputs
        ValidationError: If a required input is missing or t is out of range
    """
    started = time.perf_counter()
    mode = SolveMode(params.mode)
    if bank is not None:
        check_bank(bank, cfg, sched, prior, params)

    x_cond = conditional.predict(y) if conditional is not None else None
    init_seed = derive_seed(params.seed, _INIT_STREAM)

    if mode is SolveMode.DYNAMIC:
        if x_cond is None:
            raise ValidationError("dynamic mode needs a conditional model", context={"parameter_name": "conditional"})
        if params.t_start_override is not None:
            t_start = sched.check_t(params.t_start_override, lo=1)
        elif bank is not None:
            t_start = select_time(bank, y, x_cond, cfg, params.dcats)
        else:
            raise ValidationError(
                "dynamic mode needs a memory bank or a start-time override",
                context={"parameter_name": "bank"},
            )
        x = forward_noise(x_cond, t_start, sched, init_seed)
    else:
        t_start = sched.num_steps - 1
        x = np.random.default_rng(init_seed).standard_normal(_image_shape(prior, y, cfg))

    alphas: List[float] = []
    losses: List[float] = []
    losses_before: List[float] = []
    armijo: List[bool] = []
    curvature: List[bool] = []
    evals: List[int] = []

    plain = _plain_l2(params.weights)
    trace_vanilla = logger.isEnabledFor(logging.DEBUG)
    for t in range(t_start, 0, -1):
        step_seed = derive_seed(params.seed, _STEP_STREAM, t)
        if mode is SolveMode.VANILLA:
            x = dps_step_vanilla(x, t, y, prior, sched, cfg, params.rho, step_seed)
            alphas.append(params.rho)
            losses_before.append(float("nan"))
            # per-step losses cost one denoise each; only traced at DEBUG
            if trace_vanilla or t == 1:
                losses.append(dc_loss(y, tweedie_denoise(x, t - 1, prior, sched), cfg, plain))
                logger.debug(f"t={t}: ldc {losses[-1]:.5g}")
            else:
                losses.append(float("nan"))
            armijo.append(False)
            curvature.append(False)
            evals.append(0)
            continue

        outcome = dynamic_step(x, t, y, prior, sched, cfg, params.weights, params.wolfe, step_seed)
        x = outcome.x
        alphas.append(outcome.alpha)
        losses.append(outcome.ldc)
        losses_before.append(outcome.ldc_before)
        armijo.append(outcome.armijo)
        curvature.append(outcome.curvature)
        evals.append(outcome.evals)

    output = clamp(tweedie_denoise(x, 0, prior, sched), 0.0, 1.0)
    wall_time = time.perf_counter() - started
    logger.info(f"Solved ({mode.value}): t_start={t_start}, steps={len(alphas)}, wall_time={wall_time:.2f}s")
    return SolveReport(
        output=output,
        t_start=t_start,
        steps_taken=len(alphas),
        alpha_trace=np.asarray(alphas, dtype=np.float64),
        ldc_trace=np.asarray(losses, dtype=np.float64),
        wall_time=wall_time,
        mode=mode.value,
        ldc_before_trace=np.asarray(losses_before, dtype=np.float64),
        armijo_trace=np.asarray(armijo, dtype=bool),
        curvature_trace=np.asarray(curvature, dtype=bool),
        evals_trace=np.asarray(evals, dtype=int),
        x_cond=x_cond,
    )


def _image_shape(prior: ScoreModel, y: Image, cfg: DegradationConfig):
    shape = getattr(prior, "shape", None)
    if shape is not None:
        return tuple(shape)
    return (y.shape[0] * cfg.factor_k, y.shape[1] * cfg.factor_k)
