"""Catalog of univariate elementary functions with affine composition.

Every function has the shape

    f(x) = sgn * (post_scale * K(pre_scale * x + pre_shift) + post_shift)

where K is one of sin, cos, exp, ln and sgn is -1 when the descriptor is
negated.  Values, first and second derivatives are analytic; evaluation
accepts scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError

KINDS = ("sin", "cos", "exp", "ln")

# kind -> (value, first derivative, second derivative), scalar math versions
_SCALAR = {
    "sin": (math.sin, math.cos, lambda t: -math.sin(t)),
    "cos": (math.cos, lambda t: -math.sin(t), lambda t: -math.cos(t)),
    "exp": (math.exp, math.exp, math.exp),
    "ln": (math.log, lambda t: 1.0 / t, lambda t: -1.0 / (t * t)),
}

_ARRAY = {
    "sin": (np.sin, np.cos, lambda t: -np.sin(t)),
    "cos": (np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t)),
    "exp": (np.exp, np.exp, np.exp),
    "ln": (np.log, lambda t: 1.0 / t, lambda t: -1.0 / (t * t)),
}


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi] with lo <= hi."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ValueError(f"interval bounds out of order: [{self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol

    def contains_interval(self, other: "Interval", tol: float = 0.0) -> bool:
        return self.lo - tol <= other.lo and other.hi <= self.hi + tol

    def to_json(self) -> list:
        return [self.lo, self.hi]

    @staticmethod
    def from_json(data) -> "Interval":
        lo, hi = data
        return Interval(float(lo), float(hi))


@dataclass(frozen=True)
class UnivariateFunction:
    """Elementary function with affine pre/post composition and a negation flag."""

    kind: str
    pre_scale: float = 1.0
    pre_shift: float = 0.0
    post_scale: float = 1.0
    post_shift: float = 0.0
    negated: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown function kind {self.kind!r}")

    def _arg(self, x):
        return self.pre_scale * x + self.pre_shift

    def _check_domain(self, q):
        if self.kind != "ln":
            return
        if isinstance(q, np.ndarray):
            if q.size and float(np.min(q)) <= 0.0:
                raise DomainError(f"ln argument must be positive, got min {float(np.min(q))}")
        elif q <= 0.0:
            raise DomainError(f"ln argument must be positive, got {q}")

    def evaluate(self, x):
        """f(x); x may be a float or a numpy array."""
        q = self._arg(x)
        self._check_domain(q)
        table = _ARRAY if isinstance(x, np.ndarray) else _SCALAR
        v = self.post_scale * table[self.kind][0](q) + self.post_shift
        return -v if self.negated else v

    def derivative(self, x, order: int = 1):
        """Analytic derivative of the composed function, order 1 or 2."""
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        q = self._arg(x)
        self._check_domain(q)
        table = _ARRAY if isinstance(x, np.ndarray) else _SCALAR
        base = table[self.kind][order](q)
        v = self.post_scale * base * self.pre_scale**order
        return -v if self.negated else v

    def __call__(self, x):
        return self.evaluate(x)

    @property
    def is_constant(self) -> bool:
        return self.pre_scale == 0.0 or self.post_scale == 0.0

    def valid_on(self, interval: Interval) -> bool:
        """True when the whole interval lies in the validity region."""
        if self.kind != "ln":
            return True
        lo = self.pre_scale * interval.lo + self.pre_shift
        hi = self.pre_scale * interval.hi + self.pre_shift
        return min(lo, hi) > 0.0

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "pre_scale": self.pre_scale,
            "pre_shift": self.pre_shift,
            "post_scale": self.post_scale,
            "post_shift": self.post_shift,
            "negated": self.negated,
        }

    @staticmethod
    def from_json(data: dict) -> "UnivariateFunction":
        return UnivariateFunction(
            kind=data["kind"],
            pre_scale=float(data["pre_scale"]),
            pre_shift=float(data["pre_shift"]),
            post_scale=float(data["post_scale"]),
            post_shift=float(data["post_shift"]),
            negated=bool(data["negated"]),
        )


def sin() -> UnivariateFunction:
    return UnivariateFunction("sin")


def cos() -> UnivariateFunction:
    return UnivariateFunction("cos")


def exp() -> UnivariateFunction:
    return UnivariateFunction("exp")


def ln() -> UnivariateFunction:
    return UnivariateFunction("ln")


def constant(value: float = 0.0) -> UnivariateFunction:
    """Constant function emulated with a zero post_scale on sin."""
    return UnivariateFunction("sin", post_scale=0.0, post_shift=value)


def flip_for_overestimation(f: UnivariateFunction) -> UnivariateFunction:
    """Return -f; underestimating -f and negating the result overestimates f."""
    return replace(f, negated=not f.negated)


def lipschitz_bound(f: UnivariateFunction, interval: Interval) -> float:
    """Upper bound on |f'| over the interval.

    Maximizes f' and -f' with the global maximizer and inflates the result by
    1e-9 relative so the bound stays valid under floating point.
    """
    from .optim1d import global_max  # deferred: optim1d imports Interval from here

    if not f.valid_on(interval):
        raise DomainError(f"{f.kind} not defined on [{interval.lo}, {interval.hi}]")
    up = global_max(lambda x: f.derivative(x), interval,
                    derivative=lambda x: f.derivative(x, order=2))
    down = global_max(lambda x: -f.derivative(x), interval,
                      derivative=lambda x: -f.derivative(x, order=2))
    best = max(up.value, down.value, 0.0)
    return best * (1.0 + 1e-9)
