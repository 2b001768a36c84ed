"""Global one-sided parabolic epsilon-approximations.

A ParaApproximation is an ordered list of parabolas, each assigned a
subdomain on which it stays within eps below the function, while every
parabola underestimates the function on the whole domain.  The pointwise
maximum of the parabolas is then a global underestimator no farther than eps
from the function.  Overestimation is the mirror image: underestimate -f and
negate every parabola.

Construction is a two-level iteration: the inner loop searches for feasible
parabola coefficients on a fixed subdomain via bounds on the quadratic
coefficient, the outer loop places subdomains left to right, shrinking the
candidate right endpoint geometrically until the inner loop succeeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateDenominator, DegenerateDomain,
                     DegenerateInterval, MinimumIntervalReached)
from .functions import Interval, UnivariateFunction, flip_for_overestimation
from .optim1d import EMPTY_RESULT, inner_maxima

FEASIBILITY_TOL = 1e-9
PINCH_TOL = 1e-12
DEFAULT_LAMBDA = 0.9
MIN_INTERVAL_FACTOR = 1e-9
SLIVER_FACTOR = 1e-9
VERIFY_SLACK = 1e-8


@dataclass(frozen=True)
class Parabola:
    a: float
    b: float
    c: float

    def evaluate(self, x):
        return (self.a * x + self.b) * x + self.c

    def derivative(self, x):
        return 2.0 * self.a * x + self.b

    def __call__(self, x):
        return self.evaluate(x)

    def negated(self) -> "Parabola":
        return Parabola(-self.a, -self.b, -self.c)

    def shifted(self, offset: float) -> "Parabola":
        """The parabola x -> p(x - offset)."""
        a, b, c = self.a, self.b, self.c
        return Parabola(a, b - 2.0 * a * offset, (a * offset - b) * offset + c)

    def composed_affine(self, scale: float, shift: float) -> "Parabola":
        """The parabola x -> p(scale * x + shift)."""
        a, b, c = self.a, self.b, self.c
        return Parabola(
            a * scale * scale,
            2.0 * a * scale * shift + b * scale,
            (a * shift + b) * shift + c,
        )


@dataclass(frozen=True)
class ParaPiece:
    parabola: Parabola
    piece_domain: Interval


@dataclass(frozen=True)
class ABounds:
    """Bracket on the quadratic coefficient; feasible iff lower <= upper."""

    lower: float
    upper: float

    @property
    def feasible(self) -> bool:
        return self.lower <= self.upper


@dataclass
class ParaApproximation:
    pieces: list
    domain: Interval
    epsilon: float
    side: str  # "under" | "over"
    function: UnivariateFunction
    lam: float | None = None

    @property
    def K(self) -> int:
        return len(self.pieces)

    def envelope(self, x):
        """Pointwise max of the parabolas (min for the over side)."""
        if isinstance(x, np.ndarray):
            vals = np.stack([pc.parabola.evaluate(x) for pc in self.pieces])
            return np.min(vals, axis=0) if self.side == "over" else np.max(vals, axis=0)
        vals = [pc.parabola.evaluate(x) for pc in self.pieces]
        return min(vals) if self.side == "over" else max(vals)

    def negated(self) -> "ParaApproximation":
        """Mirror across the x-axis: an under-approximation of f becomes an
        over-approximation of -f with identical piece domains."""
        return ParaApproximation(
            pieces=[ParaPiece(pc.parabola.negated(), pc.piece_domain) for pc in self.pieces],
            domain=self.domain,
            epsilon=self.epsilon,
            side="over" if self.side == "under" else "under",
            function=flip_for_overestimation(self.function),
            lam=self.lam,
        )

    def to_json(self) -> dict:
        return {
            "function": self.function.to_json(),
            "domain": self.domain.to_json(),
            "epsilon": self.epsilon,
            "side": self.side,
            "lambda": self.lam,
            "pieces": [
                {"a": pc.parabola.a, "b": pc.parabola.b, "c": pc.parabola.c,
                 "t_lo": pc.piece_domain.lo, "t_hi": pc.piece_domain.hi}
                for pc in self.pieces
            ],
        }

    @staticmethod
    def from_json(data: dict) -> "ParaApproximation":
        pieces = [
            ParaPiece(Parabola(p["a"], p["b"], p["c"]), Interval(p["t_lo"], p["t_hi"]))
            for p in data["pieces"]
        ]
        return ParaApproximation(
            pieces=pieces,
            domain=Interval.from_json(data["domain"]),
            epsilon=float(data["epsilon"]),
            side=data["side"],
            function=UnivariateFunction.from_json(data["function"]),
            lam=None if data.get("lambda") is None else float(data["lambda"]),
        )


def _check_denominators(t_lo: float, t_hi: float, x_hat: float):
    tol = 1e-12 * (t_hi - t_lo)
    if abs(x_hat - t_lo) < tol or abs(x_hat - t_hi) < tol:
        raise DegenerateDenominator(
            f"x_hat={x_hat} too close to an endpoint of [{t_lo}, {t_hi}]")


def bound_A(f: UnivariateFunction, t_lo: float, t_hi: float, eps: float,
            x_hat: float) -> float:
    """Bound on the quadratic coefficient from a point where p <= f is tested.

    For x_hat outside [t_lo, t_hi] this is an upper bound on a; for x_hat
    strictly inside it is a lower bound.
    """
    _check_denominators(t_lo, t_hi, x_hat)
    f_lo, f_hi = f.evaluate(t_lo), f.evaluate(t_hi)
    return (f.evaluate(x_hat) - f_lo + eps) / ((x_hat - t_lo) * (x_hat - t_hi)) \
        - (f_hi - f_lo) / ((t_hi - t_lo) * (x_hat - t_hi))


def _bound_b_forms(f: UnivariateFunction, t_lo: float, t_hi: float,
                   x_hat: float) -> tuple:
    f_lo, f_hi = f.evaluate(t_lo), f.evaluate(t_hi)
    fx = f.evaluate(x_hat)
    first = (fx - f_lo) / ((x_hat - t_lo) * (x_hat - t_hi)) \
        - (f_hi - f_lo) / ((t_hi - t_lo) * (x_hat - t_hi))
    second = (fx - f_hi) / ((x_hat - t_lo) * (x_hat - t_hi)) \
        - (f_hi - f_lo) / ((t_hi - t_lo) * (x_hat - t_lo))
    return first, second


def bound_B(f: UnivariateFunction, t_lo: float, t_hi: float, x_hat: float) -> float:
    """Upper bound on a so that p(x_hat) >= f(x_hat) - eps holds at an interior point.

    Evaluates both algebraic forms and checks they agree to 1e-10 relative.
    """
    if not (t_lo < x_hat < t_hi):
        raise ValueError("x_hat must lie strictly inside [t_lo, t_hi]")
    _check_denominators(t_lo, t_hi, x_hat)
    first, second = _bound_b_forms(f, t_lo, t_hi, x_hat)
    if abs(first - second) > 1e-10 * (1.0 + abs(first)):
        raise ArithmeticError(
            f"bound_B forms disagree: {first} vs {second} at x_hat={x_hat}")
    return first


def initial_upper_a(f: UnivariateFunction, t_lo: float, t_hi: float) -> float:
    """Starting upper bound on the quadratic coefficient from the two endpoint limits."""
    w = t_hi - t_lo
    f_lo, f_hi = f.evaluate(t_lo), f.evaluate(t_hi)
    from_lo = (f_hi - f_lo + (t_lo - t_hi) * f.derivative(t_lo)) / (w * w)
    from_hi = (f_lo - f_hi + (t_hi - t_lo) * f.derivative(t_hi)) / (w * w)
    return min(from_lo, from_hi)


def solve_bc(a: float, t_lo: float, t_hi: float, f: UnivariateFunction,
             eps: float) -> tuple:
    """Unique (b, c) forcing the parabola to cross f - eps at both endpoints."""
    if t_hi - t_lo < 1e-12 * (1.0 + abs(t_hi)):
        raise DegenerateInterval(f"[{t_lo}, {t_hi}] too short to place a parabola")
    f_lo, f_hi = f.evaluate(t_lo), f.evaluate(t_hi)
    slope = (f_hi - f_lo) / (t_hi - t_lo)
    b = slope - a * (t_hi + t_lo)
    c = f_lo - eps - a * t_lo * t_lo - b * t_lo
    return b, c


def parabola_from_a(a: float, t_lo: float, t_hi: float, f: UnivariateFunction,
                    eps: float) -> Parabola:
    """Construct the crossing parabola from its parameterized closed form."""
    if t_hi - t_lo < 1e-12 * (1.0 + abs(t_hi)):
        raise DegenerateInterval(f"[{t_lo}, {t_hi}] too short to place a parabola")
    f_lo, f_hi = f.evaluate(t_lo), f.evaluate(t_hi)
    slope = (f_hi - f_lo) / (t_hi - t_lo)
    b = slope - a * (t_hi + t_lo)
    c = a * t_lo * t_hi - slope * t_lo + f_lo - eps
    return Parabola(a, b, c)


@dataclass(frozen=True)
class InnerLoopResult:
    status: str  # "feasible" | "infeasible" | "iteration_limit"
    parabola: Parabola | None
    bounds: ABounds
    iterations: int

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


def inner_loop(f: UnivariateFunction, domain: Interval, local: Interval,
               eps: float, max_iter: int = 200,
               feas_tol: float = FEASIBILITY_TOL,
               trace: list | None = None) -> InnerLoopResult:
    """Search for parabola coefficients valid on the local interval.

    The quadratic coefficient is pinned to its current upper bound; the three
    feasibility maxima either certify the candidate or tighten the bracket.
    Crossed or pinched bounds signal infeasibility; hitting the iteration
    limit is reported distinctly and treated as infeasible by the outer loop.
    A list passed as trace collects the quadratic coefficient per iteration.
    """
    t_lo, t_hi = local.lo, local.hi
    a_hi = initial_upper_a(f, t_lo, t_hi)
    a_lo = -math.inf

    for it in range(1, max_iter + 1):
        if trace is not None:
            trace.append(a_hi)
        b, c = solve_bc(a_hi, t_lo, t_hi, f, eps)
        p = Parabola(a_hi, b, c)
        m = inner_maxima(p, f, domain, local, eps)
        if m.v_max <= feas_tol:
            return InnerLoopResult("feasible", p, ABounds(a_lo, a_hi), it)

        # Tighten the bracket from the three argmax points; a point
        # indistinguishable from an endpoint cannot produce a bound.
        if m.outside is not EMPTY_RESULT and math.isfinite(m.outside.value):
            try:
                a_hi = min(a_hi, bound_A(f, t_lo, t_hi, eps, m.outside.argmax))
            except DegenerateDenominator:
                pass
        if math.isfinite(m.inside_under.value):
            try:
                a_lo = max(a_lo, bound_A(f, t_lo, t_hi, eps, m.inside_under.argmax))
            except DegenerateDenominator:
                pass
        if math.isfinite(m.inside_eps.value):
            try:
                a_hi = min(a_hi, bound_B(f, t_lo, t_hi, m.inside_eps.argmax))
            except DegenerateDenominator:
                pass

        if a_lo > a_hi:
            return InnerLoopResult("infeasible", None, ABounds(a_lo, a_hi), it)
        if math.isfinite(a_lo) and a_hi - a_lo < PINCH_TOL * (1.0 + abs(a_hi)):
            return InnerLoopResult("infeasible", None, ABounds(a_lo, a_hi), it)

    return InnerLoopResult("iteration_limit", None, ABounds(a_lo, a_hi), max_iter)


def outer_loop(f: UnivariateFunction, domain: Interval, eps: float,
               lam: float = DEFAULT_LAMBDA, side: str = "under",
               max_iter_inner: int = 200) -> ParaApproximation:
    """Place parabola subdomains left to right over the full domain.

    Each piece starts from the whole remaining interval; on inner-loop failure
    the right endpoint moves toward the left one by the convex combination
    t_k <- (1 - lam) * t_{k-1} + lam * t_k.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must lie strictly between 0 and 1")
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if side not in ("under", "over"):
        raise ValueError("side must be 'under' or 'over'")
    if side == "over":
        under = outer_loop(flip_for_overestimation(f), domain, eps, lam,
                           side="under", max_iter_inner=max_iter_inner)
        return under.negated()

    min_len = MIN_INTERVAL_FACTOR * max(1.0, domain.length)
    sliver = SLIVER_FACTOR * domain.length
    pieces = []
    t_prev = domain.lo
    while t_prev < domain.hi:
        t_k = domain.hi
        while True:
            result = inner_loop(f, domain, Interval(t_prev, t_k), eps,
                                max_iter=max_iter_inner)
            if result.feasible:
                break
            t_k = (1.0 - lam) * t_prev + lam * t_k
            if t_k - t_prev < min_len:
                raise MinimumIntervalReached(
                    f"no parabola found above length {min_len} at t={t_prev}")
        if domain.hi - t_k < sliver and t_k < domain.hi:
            # Do not emit a micro-piece for the remaining sliver; extend this
            # piece to the domain end if it stays feasible there.
            extended = Interval(t_prev, domain.hi)
            m = inner_maxima(result.parabola, f, domain, extended, eps)
            if m.v_max <= FEASIBILITY_TOL:
                t_k = domain.hi
        pieces.append(ParaPiece(result.parabola, Interval(t_prev, t_k)))
        t_prev = t_k
    return ParaApproximation(pieces=pieces, domain=domain, epsilon=eps,
                             side="under", function=f, lam=lam)


def lipschitz_construct(f: UnivariateFunction, domain: Interval, eps: float,
                       L: float) -> ParaApproximation:
    """Constructive fallback: uniform partition with a fixed quadratic coefficient.

    Picks the largest uniform width Delta <= eps / (3 L) that divides the
    domain, sets a = -4 L / Delta on every piece and completes (b, c) by the
    endpoint crossings.
    """
    if domain.length == 0.0:
        raise DegenerateDomain("cannot partition a zero-length domain")
    if L <= 0.0:
        raise ValueError("L must be positive")
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    n = math.ceil(domain.length * 3.0 * L / eps)
    delta = domain.length / n
    a = -4.0 * L / delta
    cuts = np.linspace(domain.lo, domain.hi, n + 1)
    pieces = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        b, c = solve_bc(a, float(lo), float(hi), f, eps)
        pieces.append(ParaPiece(Parabola(a, b, c), Interval(float(lo), float(hi))))
    return ParaApproximation(pieces=pieces, domain=domain, epsilon=eps,
                             side="under", function=f, lam=None)


@dataclass(frozen=True)
class ViolationReport:
    """Dense-sampling check of the two-sided approximation properties.

    Violations are stated in underestimation form (the over side is mirrored
    before checking): envelope_excess is max of envelope - f, gap_violation is
    max of f - eps - envelope, piece_excess[k] is max of p_k - f over the
    whole domain.  Margins subtract the pointwise slack 1e-8 * (1 + |f|);
    the check passes when every margin is <= 0.
    """

    samples: int
    envelope_excess: float
    gap_violation: float
    piece_excess: tuple
    envelope_margin: float
    gap_margin: float
    piece_margin: float
    passed: bool


def verify(approx: ParaApproximation, f: UnivariateFunction | None = None,
           samples: int = 10000, domain: Interval | None = None) -> ViolationReport:
    """Sample the approximation densely and report worst-case violations."""
    if samples < 1000:
        raise ValueError("samples must be at least 1000")
    if f is None:
        f = approx.function
    if approx.side == "over":
        mirrored = approx.negated()
        return verify(mirrored, mirrored.function, samples=samples, domain=domain)

    dom = domain if domain is not None else approx.domain
    xs = np.linspace(dom.lo, dom.hi, samples)
    fv = f.evaluate(xs)
    slack = VERIFY_SLACK * (1.0 + np.abs(fv))

    piece_excess = []
    piece_margin = -math.inf
    env = np.full_like(xs, -np.inf)
    for pc in approx.pieces:
        pv = pc.parabola.evaluate(xs)
        diff = pv - fv
        piece_excess.append(float(np.max(diff)))
        piece_margin = max(piece_margin, float(np.max(diff - slack)))
        np.maximum(env, pv, out=env)

    envelope_excess = float(np.max(env - fv))
    envelope_margin = float(np.max(env - fv - slack))
    gap_violation = float(np.max(fv - approx.epsilon - env))
    gap_margin = float(np.max(fv - approx.epsilon - env - slack))

    passed = envelope_margin <= 0.0 and gap_margin <= 0.0 and piece_margin <= 0.0
    return ViolationReport(
        samples=samples,
        envelope_excess=envelope_excess,
        gap_violation=gap_violation,
        piece_excess=tuple(piece_excess),
        envelope_margin=envelope_margin,
        gap_margin=gap_margin,
        piece_margin=piece_margin,
        passed=passed,
    )


def report_to_json(report: ViolationReport) -> dict:
    return {
        "samples": report.samples,
        "envelope_excess": report.envelope_excess,
        "gap_violation": report.gap_violation,
        "piece_excess": list(report.piece_excess),
        "envelope_margin": report.envelope_margin,
        "gap_margin": report.gap_margin,
        "piece_margin": report.piece_margin,
        "passed": report.passed,
    }
