"""
Strong Wolfe line search (bracket, then zoom).

The step alpha is accepted when

    phi(alpha) <= phi(0) + c1 * alpha * phi'(0)      (Armijo)
    |phi'(alpha)| <= c2 * |phi'(0)|                   (strong curvature)

Trial points inside the zoom bracket come from cubic or quadratic
interpolation and fall back to bisection when they leave the middle 80% of
the bracket. One iteration budget is shared by both phases.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from dynamic_dps.config import WolfeParams
from dynamic_dps.constants import FD_STEP_SCALE, INTERPOLATION_MARGIN
from dynamic_dps.exceptions import LineSearchError

logger = logging.getLogger(__name__)

ScalarFunction = Callable[[float], float]


@dataclass(frozen=True)
class LineSearchResult:
    """
    Attributes:
        alpha: Accepted step (0 when no Armijo point was found)
        phi_alpha: phi at the accepted step
        evals: Number of phi and phi' evaluations, phi(0) and phi'(0) included
        armijo: Sufficient decrease holds at alpha
        curvature: Strong curvature condition holds at alpha
    """

    alpha: float
    phi_alpha: float
    evals: int
    armijo: bool
    curvature: bool

    @property
    def satisfied(self) -> bool:
        return self.armijo and self.curvature


def central_difference(phi: ScalarFunction) -> ScalarFunction:
    """Directional derivative by central differences with h = 1e-4 (1 + |alpha|)."""

    def dphi(alpha: float) -> float:
        h = FD_STEP_SCALE * (1.0 + abs(alpha))
        return (phi(alpha + h) - phi(alpha - h)) / (2.0 * h)

    return dphi


def _cubicmin(a: float, fa: float, fpa: float, b: float, fb: float, c: float, fc: float) -> Optional[float]:
    # f(x) = A (x-a)^3 + B (x-a)^2 + C (x-a) + D
    with np.errstate(divide="raise", over="raise", invalid="raise"):
        try:
            C = fpa
            db = b - a
            dc = c - a
            denom = (db * dc) ** 2 * (db - dc)
            d1 = np.array([[dc**2, -(db**2)], [-(dc**3), db**3]])
            A, B = d1 @ np.array([fb - fa - C * db, fc - fa - C * dc])
            A /= denom
            B /= denom
            radical = B * B - 3 * A * C
            xmin = a + (-B + np.sqrt(radical)) / (3 * A)
        except (ArithmeticError, FloatingPointError):
            return None
    if not np.isfinite(xmin):
        return None
    return float(xmin)


def _quadmin(a: float, fa: float, fpa: float, b: float, fb: float) -> Optional[float]:
    # f(x) = B (x-a)^2 + C (x-a) + D
    with np.errstate(divide="raise", over="raise", invalid="raise"):
        try:
            db = b - a
            B = (fb - fa - fpa * db) / (db * db)
            xmin = a - fpa / (2.0 * B)
        except (ArithmeticError, FloatingPointError):
            return None
    if not np.isfinite(xmin):
        return None
    return float(xmin)


class _Search:
    """State of one search: counted evaluations, budget and best Armijo point."""

    def __init__(self, phi: ScalarFunction, dphi: ScalarFunction, params: WolfeParams, phi0: float, dphi0: float):
        self._phi = phi
        self._dphi = dphi
        self.params = params
        self.phi0 = phi0
        self.dphi0 = dphi0
        self.evals = 2
        self.iters = 0
        self.best: Optional[Tuple[float, float]] = None

    def phi(self, alpha: float) -> float:
        self.evals += 1
        return float(self._phi(alpha))

    def dphi(self, alpha: float) -> float:
        self.evals += 1
        return float(self._dphi(alpha))

    def armijo(self, alpha: float, phi_a: float) -> bool:
        ok = bool(phi_a <= self.phi0 + self.params.c1 * alpha * self.dphi0)
        if ok and (self.best is None or phi_a < self.best[1]):
            self.best = (alpha, phi_a)
        return ok

    def curvature(self, dphi_a: float) -> bool:
        return bool(abs(dphi_a) <= -self.params.c2 * self.dphi0)

    @property
    def exhausted(self) -> bool:
        return self.iters >= self.params.max_iters

    def success(self, alpha: float, phi_a: float) -> LineSearchResult:
        return LineSearchResult(alpha=alpha, phi_alpha=phi_a, evals=self.evals, armijo=True, curvature=True)

    def fallback(self) -> LineSearchResult:
        if self.best is None:
            return LineSearchResult(alpha=0.0, phi_alpha=self.phi0, evals=self.evals, armijo=False, curvature=False)
        alpha, phi_a = self.best
        return LineSearchResult(alpha=alpha, phi_alpha=phi_a, evals=self.evals, armijo=True, curvature=False)


def _trial_point(lo: float, phi_lo: float, dphi_lo: float, hi: float, phi_hi: float, rec, phi_rec) -> float:
    a, b = min(lo, hi), max(lo, hi)
    margin = INTERPOLATION_MARGIN * (b - a)
    candidates = []
    if rec is not None:
        candidates.append(_cubicmin(lo, phi_lo, dphi_lo, hi, phi_hi, rec, phi_rec))
    candidates.append(_quadmin(lo, phi_lo, dphi_lo, hi, phi_hi))
    for trial in candidates:
        if trial is not None and a + margin <= trial <= b - margin:
            return trial
    return 0.5 * (lo + hi)


def _zoom(
    search: _Search, lo: float, phi_lo: float, dphi_lo: float, hi: float, phi_hi: float
) -> LineSearchResult:
    rec: Optional[float] = None
    phi_rec: Optional[float] = None
    while not search.exhausted:
        search.iters += 1
        alpha = _trial_point(lo, phi_lo, dphi_lo, hi, phi_hi, rec, phi_rec)
        phi_a = search.phi(alpha)
        if not search.armijo(alpha, phi_a) or phi_a >= phi_lo:
            rec, phi_rec = hi, phi_hi
            hi, phi_hi = alpha, phi_a
            continue
        dphi_a = search.dphi(alpha)
        if search.curvature(dphi_a):
            return search.success(alpha, phi_a)
        if dphi_a * (hi - lo) >= 0:
            rec, phi_rec = hi, phi_hi
            hi, phi_hi = lo, phi_lo
        else:
            rec, phi_rec = lo, phi_lo
        lo, phi_lo, dphi_lo = alpha, phi_a, dphi_a
    return search.fallback()


def strong_wolfe(
    phi: ScalarFunction,
    dphi: Optional[ScalarFunction] = None,
    params: Optional[WolfeParams] = None,
    phi0: Optional[float] = None,
    dphi0: Optional[float] = None,
) -> LineSearchResult:
    """
    Find a step satisfying the strong Wolfe conditions.

    Args:
        phi: phi(alpha) = f(x + alpha p)
        dphi: Derivative of phi; central differences of phi when omitted
        params: Wolfe constants and budget
        phi0: Known phi(0), saves one evaluation
        dphi0: Known phi'(0), e.g. -||g||^2 from an analytic gradient

    Returns:
        LineSearchResult; on budget exhaustion the best Armijo point with
        curvature=False, on total failure alpha=0 with both flags False

    Raises:
        LineSearchError: If phi'(0) >= 0
    """
    params = params or WolfeParams()
    dphi = dphi or central_difference(phi)

    dphi0 = float(dphi(0.0)) if dphi0 is None else float(dphi0)
    if not dphi0 < 0:
        raise LineSearchError(
            f"not a descent direction: phi'(0) = {dphi0}",
            dphi0=dphi0,
        )
    phi0 = float(phi(0.0)) if phi0 is None else float(phi0)

    search = _Search(phi, dphi, params, phi0, dphi0)
    alpha_prev, phi_prev, dphi_prev = 0.0, phi0, dphi0
    alpha = min(params.alpha_init, params.alpha_max)

    while not search.exhausted:
        search.iters += 1
        phi_a = search.phi(alpha)
        armijo = search.armijo(alpha, phi_a)
        if not armijo or (alpha_prev > 0 and phi_a >= phi_prev):
            result = _zoom(search, alpha_prev, phi_prev, dphi_prev, alpha, phi_a)
            break
        dphi_a = search.dphi(alpha)
        if search.curvature(dphi_a):
            result = search.success(alpha, phi_a)
            break
        if dphi_a >= 0:
            result = _zoom(search, alpha, phi_a, dphi_a, alpha_prev, phi_prev)
            break
        if alpha >= params.alpha_max:
            result = search.fallback()
            break
        alpha_prev, phi_prev, dphi_prev = alpha, phi_a, dphi_a
        alpha = min(2.0 * alpha, params.alpha_max)
    else:
        result = search.fallback()

    logger.debug(
        f"Line search: alpha={result.alpha:.4g}, evals={result.evals}, "
        f"armijo={result.armijo}, curvature={result.curvature}"
    )
    return result
