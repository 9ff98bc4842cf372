"""Model parameters, admissibility checks, and the dissipativity margin.

The equation under study is

    du = ((1 + i*alpha) Lap u + u - (1 + i*beta) |u|^(2q) u) dt + xi dw(t)

on R^d (d = 1 or 2), with nonlinearity exponent q > 1/2.  Admissible
parameter ranges are

    -(1 + alpha*beta) < |alpha - beta| * sqrt(2q+1)/q        (strict)
    |beta| <= sqrt(2q+1)/q                                   (non-strict)

The dissipativity margin encodes the sign condition that makes the
H^1 energy budget close: with theta = arcsin(q/(1+q)),

    margin(eps) = -(1 + alpha*beta) - |beta - alpha|/tan(theta)
                  + eps*(2 - eps)/sin(theta)^2

and the parameters are workable iff margin(eps) <= 0 for some eps > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class ValidationError(ValueError):
    """Raised when parameters fall outside the admissible ranges."""


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the equation plus the two cutoff levels.

    big_r is the sup-norm stopping radius, big_m the level above which
    the Lipschitz cutoff switches the nonlinearity off.
    """

    alpha: float
    beta: float
    q: float = 1.0
    d: int = 1
    big_r: float = 10.0
    big_m: float = 12.0

    def __post_init__(self):
        if self.big_r < 1.0:
            raise ValidationError(f"stopping radius must be >= 1, got {self.big_r}")
        if self.big_m <= self.big_r:
            raise ValidationError(
                f"cutoff level {self.big_m} must exceed stopping radius {self.big_r}"
            )


@dataclass(frozen=True)
class HypothesisReport:
    condition1_lhs: float       # -(1 + alpha*beta)
    condition1_rhs: float       # |alpha - beta| * sqrt(2q+1)/q
    condition2_ok: bool         # |beta| <= sqrt(2q+1)/q
    theta: float                # arcsin(q/(1+q)), radians
    satisfied: bool
    boundary: bool = False      # an inequality holds with equality (to fp tolerance)


@dataclass(frozen=True)
class DissipativityMargin:
    lam: float          # convex weight lambda = cos^2(eta) at the optimal eta
    epsilon: float
    margin_value: float

    @property
    def feasible(self) -> bool:
        return self.margin_value <= 0.0


def _slope(q: float) -> float:
    """sqrt(2q+1)/q, the common right-hand side of both admissibility bounds."""
    return math.sqrt(2.0 * q + 1.0) / q


def theta_angle(q: float) -> float:
    return math.asin(q / (1.0 + q))


def check_hypothesis(params: ModelParams) -> HypothesisReport:
    """Evaluate both admissibility inequalities.

    Both are computed independently (the second implies the first, but we
    do not rely on that).  Rejects q <= 1/2 and d not in {1, 2} outright.
    """
    if params.q <= 0.5:
        raise ValidationError(f"nonlinearity exponent must exceed 1/2, got {params.q}")
    if params.d not in (1, 2):
        raise ValidationError(f"spatial dimension must be 1 or 2, got {params.d}")
    s = _slope(params.q)
    lhs = -(1.0 + params.alpha * params.beta)
    rhs = abs(params.alpha - params.beta) * s
    cond1 = lhs < rhs
    cond2 = abs(params.beta) <= s
    tol = 1e-12 * max(1.0, abs(lhs), abs(rhs))
    boundary = abs(lhs - rhs) <= tol or abs(abs(params.beta) - s) <= tol
    return HypothesisReport(
        condition1_lhs=lhs,
        condition1_rhs=rhs,
        condition2_ok=cond2,
        theta=theta_angle(params.q),
        satisfied=cond1 and cond2,
        boundary=boundary,
    )


def energy_bracket(params: ModelParams, lam: float, epsilon: float) -> float:
    """The curly-bracket expression of the H^1 energy estimate.

    Positive values mean the cross term is dominated at this (lambda,
    epsilon), closing the energy budget.
    """
    th = theta_angle(params.q)
    return (
        2.0 * (1.0 - epsilon) * math.sqrt(max(lam * (1.0 - lam), 0.0))
        + math.cos(th)
        - abs(lam * params.beta - (1.0 - lam) * params.alpha) * math.sin(th)
    )


def _optimal_eta(params: ModelParams, epsilon: float) -> float:
    """Golden-section maximisation of the bracket over eta in [0, pi/2]."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0

    def f(eta: float) -> float:
        return energy_bracket(params, math.cos(eta) ** 2, epsilon)

    # coarse pre-scan: the absolute-value kink can make the bracket bimodal
    n = 256
    etas = [0.5 * math.pi * k / n for k in range(n + 1)]
    k_best = max(range(n + 1), key=lambda k: f(etas[k]))
    a = etas[max(k_best - 1, 0)]
    b = etas[min(k_best + 1, n)]
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > 1e-12:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _margin_value(params: ModelParams, epsilon: float) -> float:
    th = theta_angle(params.q)
    return (
        -(1.0 + params.alpha * params.beta)
        - abs(params.beta - params.alpha) / math.tan(th)
        + epsilon * (2.0 - epsilon) / math.sin(th) ** 2
    )


def margin(params: ModelParams, epsilon: float) -> DissipativityMargin:
    """The optimised sign condition at a given margin epsilon.

    Negative margin_value means the energy estimate closes.  Requires
    admissible (q, d); does not require the hypothesis inequalities, so
    the caller can probe infeasible parameter sets.
    """
    if params.q <= 0.5 or params.d not in (1, 2):
        raise ValidationError("margin requires q > 1/2 and d in {1, 2}")
    value = _margin_value(params, epsilon)
    eta = _optimal_eta(params, epsilon)
    return DissipativityMargin(lam=math.cos(eta) ** 2, epsilon=epsilon, margin_value=value)


def feasible_epsilon_max(params: ModelParams, tol: float = 1e-10) -> float:
    """Largest eps in (0, 1] with margin(eps) <= 0, or 0 if none.

    margin_value is strictly increasing in eps on (0, 1], so a bisection
    suffices.
    """
    if params.q <= 0.5 or params.d not in (1, 2):
        raise ValidationError("margin requires q > 1/2 and d in {1, 2}")
    lo = 0.0
    if _margin_value(params, 1e-15) > 0.0:
        return 0.0
    if _margin_value(params, 1.0) <= 0.0:
        return 1.0
    hi = 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _margin_value(params, mid) <= 0.0:
            lo = mid
        else:
            hi = mid
    return lo
