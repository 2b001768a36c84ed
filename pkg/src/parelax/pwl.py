"""Piecewise-linear epsilon-approximation and relaxation.

Breakpoints are placed greedily left to right: each piece takes the largest
right endpoint whose chord stays within eps of the function, located by a
binary search certified through the 1-d global maximizer.  The domain is
first cut at curvature sign changes so the per-piece error is one-sided and
the binary-search feasibility frontier is monotone.  A relaxation is the
eps/2 approximation shifted down by eps/2.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import OutOfDomain
from .functions import Interval, UnivariateFunction
from .optim1d import global_max

RESOLUTION_FACTOR = 1e-9


@dataclass(frozen=True)
class PwlApproximation:
    function: UnivariateFunction
    breakpoints: tuple
    values: tuple
    shift: float
    epsilon: float

    def __post_init__(self):
        if len(self.breakpoints) < 2 or len(self.values) != len(self.breakpoints):
            raise ValueError("need at least two breakpoints with matching values")
        if any(b >= c for b, c in zip(self.breakpoints[:-1], self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")

    @property
    def K(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def domain(self) -> Interval:
        return Interval(self.breakpoints[0], self.breakpoints[-1])

    def to_json(self) -> dict:
        return {
            "function": self.function.to_json(),
            "domain": self.domain.to_json(),
            "epsilon": self.epsilon,
            "shift": self.shift,
            "breakpoints": list(self.breakpoints),
            "values": list(self.values),
        }

    @staticmethod
    def from_json(data: dict) -> "PwlApproximation":
        return PwlApproximation(
            function=UnivariateFunction.from_json(data["function"]),
            breakpoints=tuple(float(t) for t in data["breakpoints"]),
            values=tuple(float(v) for v in data["values"]),
            shift=float(data["shift"]),
            epsilon=float(data["epsilon"]),
        )


def interpolate(pwl: PwlApproximation, x: float) -> float:
    """Linear interpolation on the containing piece, minus the shift."""
    t = pwl.breakpoints
    tol = 1e-12 * max(1.0, t[-1] - t[0])
    if x < t[0] - tol or x > t[-1] + tol:
        raise OutOfDomain(f"x={x} outside [{t[0]}, {t[-1]}]")
    x = min(max(x, t[0]), t[-1])
    k = min(max(bisect.bisect_right(t, x) - 1, 0), pwl.K - 1)
    lo, hi = t[k], t[k + 1]
    w = (x - lo) / (hi - lo)
    return pwl.values[k] * (1.0 - w) + pwl.values[k + 1] * w - pwl.shift


def evaluate_envelope(pwl: PwlApproximation, xs: np.ndarray) -> np.ndarray:
    """Vectorized shifted interpolant over sample points inside the domain."""
    return np.interp(xs, pwl.breakpoints, pwl.values) - pwl.shift


def curvature_splits(f: UnivariateFunction, domain: Interval) -> list:
    """Interior points where f'' changes sign (inflections of the composed function).

    Only sin and cos have inflections; exp, ln and constants return none.
    Keeping one curvature sign per greedy segment makes the chord error
    one-sided and the piece-feasibility frontier monotone in the endpoint.
    """
    if f.is_constant or f.kind in ("exp", "ln"):
        return []
    # f'' vanishes where the base second derivative does: sin(q) = 0 at q = k*pi,
    # cos(q) = 0 at q = pi/2 + k*pi, with q = pre_scale * x + pre_shift.
    offset = 0.0 if f.kind == "sin" else math.pi / 2.0
    s, h = f.pre_scale, f.pre_shift
    q_lo = s * domain.lo + h
    q_hi = s * domain.hi + h
    q_min, q_max = min(q_lo, q_hi), max(q_lo, q_hi)
    k_min = math.ceil((q_min - offset) / math.pi)
    k_max = math.floor((q_max - offset) / math.pi)
    tol = 1e-12 * max(1.0, domain.length)
    splits = []
    for k in range(k_min, k_max + 1):
        x = ((offset + k * math.pi) - h) / s
        if domain.lo + tol < x < domain.hi - tol:
            splits.append(x)
    return sorted(splits)


def _chord_error(f: UnivariateFunction, s: float, t: float) -> float:
    """Max |chord - f| on [s, t] for the chord through (s, f(s)), (t, f(t))."""
    fs, ft = f.evaluate(s), f.evaluate(t)
    slope = (ft - fs) / (t - s)

    def above(x):
        return fs + slope * (x - s) - f.evaluate(x)

    def d_above(x):
        return slope - f.derivative(x)

    seg = Interval(s, t)
    e_above = global_max(above, seg, derivative=d_above).value
    e_below = global_max(lambda x: -above(x), seg,
                         derivative=lambda x: -d_above(x)).value
    return max(e_above, e_below)


def greedy_breakpoints(f: UnivariateFunction, domain: Interval,
                       eps: float) -> PwlApproximation:
    """Greedy maximal-piece placement at tolerance eps, zero shift.

    Works segment by segment between curvature sign changes; within a segment
    the largest feasible endpoint is found by bisection down to a resolution
    of 1e-9 times the full domain length.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    resolution = RESOLUTION_FACTOR * domain.length
    cuts = [domain.lo] + curvature_splits(f, domain) + [domain.hi]
    breakpoints = [domain.lo]
    for seg_lo, seg_hi in zip(cuts[:-1], cuts[1:]):
        t_prev = seg_lo
        while t_prev < seg_hi:
            if _chord_error(f, t_prev, seg_hi) <= eps:
                breakpoints.append(seg_hi)
                t_prev = seg_hi
                continue
            lo_pt, hi_pt = t_prev, seg_hi
            while hi_pt - lo_pt > resolution:
                mid = 0.5 * (lo_pt + hi_pt)
                if _chord_error(f, t_prev, mid) <= eps:
                    lo_pt = mid
                else:
                    hi_pt = mid
            if lo_pt <= t_prev:
                raise ArithmeticError(
                    f"binary search collapsed at t={t_prev}; eps too small for resolution")
            breakpoints.append(lo_pt)
            t_prev = lo_pt
    values = tuple(f.evaluate(t) for t in breakpoints)
    return PwlApproximation(function=f, breakpoints=tuple(breakpoints),
                            values=values, shift=0.0, epsilon=eps)


def relax_shift(f: UnivariateFunction, domain: Interval, eps: float) -> PwlApproximation:
    """Relaxation: interpolate at eps/2, then shift the interpolant down by eps/2.

    The shifted envelope satisfies envelope <= f <= envelope + eps.
    """
    approx = greedy_breakpoints(f, domain, eps / 2.0)
    return replace(approx, shift=eps / 2.0)


def max_error(f: UnivariateFunction, pwl: PwlApproximation) -> float:
    """Max |interpolant - f| over the domain for the unshifted interpolant."""
    worst = 0.0
    for s, t in zip(pwl.breakpoints[:-1], pwl.breakpoints[1:]):
        worst = max(worst, _chord_error(f, s, t))
    return worst
