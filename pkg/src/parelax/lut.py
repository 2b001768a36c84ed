"""Bound rounding and look-up-table management for parabolic approximations.

Raw constraint domains are rounded outward to a coarse, kind-specific lattice
so that many instances share one precomputed approximation.  The cache is
keyed by (kind, rounded interval, epsilon, side) and persists as a JSON-lines
file.  Trigonometric domains longer than two periods are served by tiling a
single-period approximation.
"""

from __future__ import annotations

import json
import math
import os

from .errors import DomainViolation
from .functions import Interval, UnivariateFunction
from . import para

TWO_PI = 2.0 * math.pi
TRIG_GROUP = 0.1
TRIG_TILE_THRESHOLD = 4.0 * math.pi + 1e-9


def _floor_mult(x: float, g: float) -> float:
    """Greatest double multiple of g that is <= x (exact under float rounding)."""
    k = math.floor(x / g)
    while k * g > x:
        k -= 1
    while (k + 1) * g <= x:
        k += 1
    return k * g


def _ceil_mult(x: float, g: float) -> float:
    """Smallest double multiple of g that is >= x."""
    k = math.ceil(x / g)
    while k * g < x:
        k += 1
    while (k - 1) * g >= x:
        k -= 1
    return k * g


def _decade(x: float) -> int:
    """Exponent d with 10**d <= x < 10**(d+1) for x > 0."""
    d = math.floor(math.log10(x))
    while 10.0**d > x:
        d -= 1
    while 10.0 ** (d + 1) <= x:
        d += 1
    return d


def _band(x: float) -> int:
    """Exponent l with 10**(l-1) < x <= 10**l for x > 0."""
    l = math.ceil(math.log10(x))
    while 10.0 ** (l - 1) >= x:
        l -= 1
    while 10.0**l < x:
        l += 1
    return l


def _round_exp_lower(x: float) -> float:
    if x == 0.0:
        return 0.0
    if x < -1.0:
        # down to the next multiple of the magnitude's order (e.g. -132 -> -200)
        return _floor_mult(x, 10.0 ** _decade(-x))
    return _floor_mult(x, 10.0 ** _decade(abs(x)))


def _round_exp_upper(x: float) -> float:
    if x == 0.0:
        return 0.0
    if x > 0.0:
        # second digit for positive upper bounds
        return _ceil_mult(x, 10.0 ** (_decade(x) - 1))
    return _ceil_mult(x, 10.0 ** _decade(-x))


def _round_ln_lower(x: float) -> float:
    l = min(_band(x), 3)
    return _floor_mult(x, 10.0 ** (l - 1))


def _round_ln_upper(x: float) -> float:
    l = max(_band(x), -1)
    return _ceil_mult(x, 10.0 ** (l - 1))


def round_bounds(kind: str, raw: Interval) -> Interval:
    """Round a raw domain outward to the clustering lattice of its kind.

    exp: lower bounds below -1 go to the next order-of-magnitude multiple,
    otherwise to the first digit; upper bounds to the first digit when
    non-positive, second digit when positive.  ln: each bound moves to the
    next multiple of 10**(l-1) for its band (10**(l-1), 10**l], with the band
    capped at l <= 3 below and l >= -1 above.  sin/cos: multiples of 0.1,
    switching to whole shifted periods once the grouped domain exceeds 4*pi.
    The result contains the input and is a fixed point of the rounding.
    """
    if kind in ("sin", "cos"):
        lo = _floor_mult(raw.lo, TRIG_GROUP)
        hi = _ceil_mult(raw.hi, TRIG_GROUP)
        if hi - lo <= TRIG_TILE_THRESHOLD:
            return Interval(lo, hi)
        return Interval(_floor_mult(raw.lo, TWO_PI), _ceil_mult(raw.hi, TWO_PI))
    if kind == "exp":
        return Interval(_round_exp_lower(raw.lo), _round_exp_upper(raw.hi))
    if kind == "ln":
        if raw.lo <= 0.0:
            raise DomainViolation(f"ln domain must be positive, got lo={raw.lo}")
        return Interval(_round_ln_lower(raw.lo), _round_ln_upper(raw.hi))
    raise ValueError(f"no rounding rule for kind {kind!r}")


def _tiled_approximation(fn: UnivariateFunction, rounded: Interval, eps: float,
                         side: str, lam: float) -> para.ParaApproximation:
    """Approximate one full period and tile shifted copies over the domain."""
    n = round(rounded.length / TWO_PI)
    base = para.outer_loop(fn, Interval(rounded.lo, rounded.lo + TWO_PI), eps,
                           lam=lam, side=side)
    shifted = []
    for j in range(n):
        offset = j * TWO_PI
        for pc in base.pieces:
            shifted.append((pc.parabola.shifted(offset),
                            pc.piece_domain.lo + offset,
                            pc.piece_domain.hi + offset))
    # snap tile seams so consecutive piece domains share endpoints exactly
    pieces = []
    cursor = rounded.lo
    for k, (parabola, lo, hi) in enumerate(shifted):
        hi = rounded.hi if k == len(shifted) - 1 else hi
        pieces.append(para.ParaPiece(parabola, Interval(cursor, max(hi, cursor))))
        cursor = max(hi, cursor)
    tiled = para.ParaApproximation(pieces=pieces, domain=rounded, epsilon=eps,
                                   side=side, function=fn, lam=lam)
    if para.verify(tiled, fn, samples=max(10000, 2000 * n)).passed:
        return tiled
    # a shifted parabola exceeded the function outside its own period
    return para.outer_loop(fn, rounded, eps, lam=lam, side=side)


class LookupTable:
    """Cache of precomputed approximations on rounded domains.

    Reads are free to run concurrently; writes (compute-and-store, save) must
    be serialized by the caller.  Stored entries are immutable.
    """

    def __init__(self, path: str | None = None):
        self.path = path
        self.entries: dict = {}
        self.hits = 0
        self.misses = 0
        if path is not None and os.path.exists(path):
            self.load(path)

    @staticmethod
    def key(kind: str, rounded: Interval, eps: float, side: str) -> tuple:
        return (kind, repr(rounded.lo), repr(rounded.hi), repr(eps), side)

    def load(self, path: str):
        with open(path, "r", encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                approx = para.ParaApproximation.from_json(record["approximation"])
                key = self.key(record["kind"],
                               Interval(record["lo"], record["hi"]),
                               record["epsilon"], record["side"])
                self.entries[key] = approx
        self.path = path

    def save(self, path: str | None = None):
        path = path or self.path
        if path is None:
            raise ValueError("no cache path configured")
        with open(path, "w", encoding="utf-8") as handle:
            for key, approx in self.entries.items():
                kind, lo, hi, eps, side = key
                record = {
                    "kind": kind,
                    "lo": float(lo),
                    "hi": float(hi),
                    "epsilon": float(eps),
                    "side": side,
                    "approximation": approx.to_json(),
                }
                handle.write(json.dumps(record) + "\n")
        self.path = path


def lookup_or_compute(table: LookupTable, kind: str, raw: Interval, eps: float,
                      side: str, lam: float = para.DEFAULT_LAMBDA) -> para.ParaApproximation:
    """Fetch the approximation for the rounded domain, computing it on a miss.

    The returned approximation's domain contains the raw interval, so it is
    valid wherever the raw constraint lives.
    """
    rounded = round_bounds(kind, raw)
    key = LookupTable.key(kind, rounded, eps, side)
    if key in table.entries:
        table.hits += 1
        return table.entries[key]
    table.misses += 1
    fn = UnivariateFunction(kind)
    if kind in ("sin", "cos") and rounded.length > TRIG_TILE_THRESHOLD:
        approx = _tiled_approximation(fn, rounded, eps, side, lam)
    else:
        approx = para.outer_loop(fn, rounded, eps, lam=lam, side=side)
    report = para.verify(approx, fn)
    if not report.passed:
        raise ArithmeticError(
            f"computed approximation failed verification for {key}")
    table.entries[key] = approx
    return approx


def approximate_function(fn: UnivariateFunction, raw: Interval, eps: float,
                         side: str, lam: float = para.DEFAULT_LAMBDA,
                         table: LookupTable | None = None) -> para.ParaApproximation:
    """Approximate an affine-composed function, using the table for the bare kind.

    f(x) = alpha * K(s x + h) + beta reduces to an approximation of K on the
    image domain at tolerance eps / |alpha|; the cached parabolas map back
    through the affine substitutions.  Without a table (or for constant
    functions) the outer loop runs on the raw domain directly.
    """
    if table is None or fn.is_constant:
        return para.outer_loop(fn, raw, eps, lam=lam, side=side)

    sign = -1.0 if fn.negated else 1.0
    alpha = sign * fn.post_scale
    beta = sign * fn.post_shift
    s, h = fn.pre_scale, fn.pre_shift
    t_lo, t_hi = s * raw.lo + h, s * raw.hi + h
    t_dom = Interval(min(t_lo, t_hi), max(t_lo, t_hi))
    base_side = side if alpha > 0 else ("over" if side == "under" else "under")
    base_eps = eps / abs(alpha)

    base = lookup_or_compute(table, fn.kind, t_dom, base_eps, base_side, lam)

    pieces = []
    for pc in base.pieces:
        q = pc.parabola.composed_affine(s, h)
        p = para.Parabola(alpha * q.a, alpha * q.b, alpha * q.c + beta)
        x_lo = (pc.piece_domain.lo - h) / s
        x_hi = (pc.piece_domain.hi - h) / s
        pieces.append(para.ParaPiece(p, Interval(min(x_lo, x_hi), max(x_lo, x_hi))))
    if s < 0:
        pieces.reverse()
    d_lo = (base.domain.lo - h) / s
    d_hi = (base.domain.hi - h) / s
    return para.ParaApproximation(
        pieces=pieces,
        domain=Interval(min(d_lo, d_hi), max(d_lo, d_hi)),
        epsilon=eps,
        side=side,
        function=fn,
        lam=lam,
    )
