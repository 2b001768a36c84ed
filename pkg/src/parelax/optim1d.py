"""Deterministic global maximization of smooth functions on closed intervals.

The strategy is a dense grid scan followed by a safeguarded root search on the
derivative inside every grid cell where the derivative crosses from positive
to non-positive.  Endpoints are always candidates unless the caller asks for
the open-interval maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteObjective
from .functions import Interval, UnivariateFunction

STEP_TOL_FACTOR = 1e-13
ENDPOINT_DISCARD = 1e-12


@dataclass(frozen=True)
class MaxResult:
    argmax: float
    value: float
    iterations: int


EMPTY_RESULT = MaxResult(argmax=math.nan, value=-math.inf, iterations=0)


def default_grid_n(interval: Interval) -> int:
    return max(129, math.ceil(64.0 * interval.length))


def _eval_grid(objective, xs: np.ndarray) -> np.ndarray:
    ys = objective(xs)
    if not isinstance(ys, np.ndarray) or ys.shape != xs.shape:
        ys = np.array([float(objective(float(x))) for x in xs])
    if not np.all(np.isfinite(ys)):
        raise NonFiniteObjective("objective produced a non-finite value on the grid")
    return ys


def _numeric_derivative(objective, interval: Interval):
    h = 1e-7 * (1.0 + interval.length)

    def deriv(x):
        return (objective(x + h) - objective(x - h)) / (2.0 * h)

    return deriv


def global_max(objective, interval: Interval, grid_n: int | None = None,
               derivative=None, interior_only: bool = False) -> MaxResult:
    """Maximize objective over the interval.

    Candidates are the endpoints, the best grid point, and every refined root
    of the derivative where it crosses from + to -.  Refinement is a
    secant/bisection hybrid on the derivative sign-change bracket, stopping at
    |step| < 1e-13 * (1 + |I|).  With interior_only, candidates within 1e-12
    of a bound are discarded (open-interval maximum).
    """
    lo, hi = interval.lo, interval.hi
    if hi <= lo:
        return EMPTY_RESULT
    if grid_n is None:
        grid_n = default_grid_n(interval)
    if derivative is None:
        derivative = _numeric_derivative(objective, interval)

    xs = np.linspace(lo, hi, grid_n)
    ys = _eval_grid(objective, xs)
    ds = _eval_grid(derivative, xs)

    step_tol = STEP_TOL_FACTOR * (1.0 + interval.length)
    iterations = 0
    candidates = [] if interior_only else [lo, hi]
    candidates.append(float(xs[int(np.argmax(ys))]))
    if interior_only and grid_n > 2:
        # the best strictly interior grid point survives endpoint discarding
        candidates.append(float(xs[1 + int(np.argmax(ys[1:-1]))]))

    crossing = np.nonzero((ds[:-1] > 0.0) & (ds[1:] <= 0.0))[0]
    for i in crossing:
        a, b = float(xs[i]), float(xs[i + 1])
        fa, fb = float(ds[i]), float(ds[i + 1])
        for _ in range(120):
            if fb != fa:
                m = b - fb * (b - a) / (fb - fa)
            else:
                m = 0.5 * (a + b)
            if not (a < m < b):
                m = 0.5 * (a + b)
            fm = float(derivative(m))
            if not math.isfinite(fm):
                raise NonFiniteObjective("derivative produced a non-finite value")
            iterations += 1
            if fm > 0.0:
                a, fa = m, fm
            else:
                b, fb = m, fm
            if b - a < step_tol:
                break
        candidates.append(0.5 * (a + b))

    end_tol = ENDPOINT_DISCARD * max(1.0, interval.length)
    best_x, best_v = math.nan, -math.inf
    for x in candidates:
        if interior_only and (abs(x - lo) <= end_tol or abs(x - hi) <= end_tol):
            continue
        v = float(objective(x))
        if not math.isfinite(v):
            raise NonFiniteObjective("objective produced a non-finite value")
        if v > best_v:
            best_x, best_v = x, v
    return MaxResult(argmax=best_x, value=best_v, iterations=iterations)


@dataclass(frozen=True)
class InnerMaxima:
    """The three feasibility maxima of the inner loop plus their overall max."""

    outside: MaxResult        # p - f on D \ D_loc (closed, possibly two parts)
    inside_under: MaxResult   # p - f on int(D_loc)
    inside_eps: MaxResult     # f - p - eps on int(D_loc)
    v_max: float


def inner_maxima(p, f: UnivariateFunction, domain: Interval, local: Interval,
                 eps: float, grid_n: int | None = None) -> InnerMaxima:
    """Evaluate the three inner-loop maxima for a candidate parabola.

    The exterior D \\ D_loc splits into at most two closed subintervals; when
    empty the corresponding result carries value -inf.  The two interior
    maxima are taken over the open interval: near-endpoint hits are discarded.
    """
    if not domain.contains_interval(local):
        raise ValueError("local interval must lie inside the domain")

    def p_minus_f(x):
        return p.evaluate(x) - f.evaluate(x)

    def d_p_minus_f(x):
        return p.derivative(x) - f.derivative(x)

    def f_minus_p(x):
        return f.evaluate(x) - p.evaluate(x) - eps

    def d_f_minus_p(x):
        return f.derivative(x) - p.derivative(x)

    outside = EMPTY_RESULT
    if local.lo - domain.lo > 0.0:
        left = global_max(p_minus_f, Interval(domain.lo, local.lo), grid_n, d_p_minus_f)
        if left.value > outside.value:
            outside = left
    if domain.hi - local.hi > 0.0:
        right = global_max(p_minus_f, Interval(local.hi, domain.hi), grid_n, d_p_minus_f)
        if right.value > outside.value:
            outside = right

    inside_under = global_max(p_minus_f, local, grid_n, d_p_minus_f, interior_only=True)
    inside_eps = global_max(f_minus_p, local, grid_n, d_f_minus_p, interior_only=True)

    v_max = max(outside.value, inside_under.value, inside_eps.value)
    return InnerMaxima(outside, inside_under, inside_eps, v_max)
