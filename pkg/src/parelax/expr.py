"""Factorable expressions: parsing, interval propagation, reformulation.

Constraints arrive as expression trees over named variables.  Reformulation
rewrites them into the normal form used by the relaxation pipeline: a linear
objective, a set Omega of linear and quadratic rows over the (extended)
variable vector, and univariate constraints f(x_i) <= y_j / f(x_i) >= y_j for
the four elementary function kinds.  Nonlinear unary nodes nested inside
other operations get an equality pair (both inequality directions); nodes
appearing additively at the top level of a constraint only need the direction
implied by their coefficient sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DomainViolation, ParseError, UnsupportedOperation
from .functions import Interval, UnivariateFunction

UNARY_OPS = ("sin", "cos", "exp", "log", "abs", "neg")
BINARY_OPS = ("add", "mul", "div", "pow")
_FUNC_TOKENS = {"sin": "sin", "cos": "cos", "exp": "exp", "log": "log",
                "ln": "log", "abs": "abs"}
_KIND_FOR_OP = {"sin": "sin", "cos": "cos", "exp": "exp", "log": "ln"}


@dataclass(frozen=True)
class ExpressionNode:
    op: str
    children: tuple = ()
    name: str | None = None      # var nodes
    value: float | None = None   # const nodes

    def __post_init__(self):
        arity = {"var": 0, "const": 0}
        expected = arity.get(self.op, 1 if self.op in UNARY_OPS else 2)
        if self.op not in ("var", "const") and self.op not in UNARY_OPS \
                and self.op not in BINARY_OPS:
            raise ValueError(f"unknown op {self.op!r}")
        if len(self.children) != expected:
            raise ValueError(f"{self.op} expects {expected} children, got {len(self.children)}")


def var(name: str) -> ExpressionNode:
    return ExpressionNode("var", name=name)


def const(value: float) -> ExpressionNode:
    return ExpressionNode("const", value=float(value))


def node(op: str, *children: ExpressionNode) -> ExpressionNode:
    return ExpressionNode(op, children=tuple(children))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_CONSTANTS = {"pi": math.pi, "e": math.e}


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.tokens = []
        self._run()

    def _run(self):
        text, n = self.text, len(self.text)
        i = 0
        while i < n:
            ch = text[i]
            if ch.isspace():
                i += 1
                continue
            if ch in "+-*/^()":
                self.tokens.append((ch, ch, i))
                i += 1
                continue
            if ch.isdigit() or ch == ".":
                j = i
                while j < n and (text[j].isdigit() or text[j] == "."):
                    j += 1
                # exponent part of a float literal
                if j < n and text[j] in "eE" and j + 1 < n \
                        and (text[j + 1].isdigit() or (text[j + 1] in "+-" and j + 2 < n and text[j + 2].isdigit())):
                    j += 2
                    while j < n and text[j].isdigit():
                        j += 1
                try:
                    val = float(text[i:j])
                except ValueError:
                    raise ParseError(f"bad number literal {text[i:j]!r}", i)
                self.tokens.append(("num", val, i))
                i = j
                continue
            if ch.isalpha() or ch == "_":
                j = i
                while j < n and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                self.tokens.append(("ident", text[i:j], i))
                i = j
                continue
            raise ParseError(f"unexpected character {ch!r}", i)
        self.tokens.append(("end", None, n))


class _Parser:
    def __init__(self, text: str):
        self.tokens = _Tokenizer(text).tokens
        self.k = 0

    def peek(self):
        return self.tokens[self.k]

    def take(self):
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def expect(self, kind: str):
        tok = self.take()
        if tok[0] != kind:
            raise ParseError(f"expected {kind!r}, got {tok[1]!r}", tok[2])
        return tok

    def parse(self) -> ExpressionNode:
        result = self.expression()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected trailing input {tok[1]!r}", tok[2])
        return result

    def expression(self) -> ExpressionNode:
        left = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            right = self.term()
            left = node("add", left, node("neg", right) if op == "-" else right)
        return left

    def term(self) -> ExpressionNode:
        left = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.take()[0]
            right = self.unary()
            left = node("mul" if op == "*" else "div", left, right)
        return left

    def unary(self) -> ExpressionNode:
        if self.peek()[0] == "-":
            self.take()
            return node("neg", self.unary())
        if self.peek()[0] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> ExpressionNode:
        base = self.atom()
        if self.peek()[0] == "^":
            self.take()
            return node("pow", base, self.unary())
        return base

    def atom(self) -> ExpressionNode:
        kind, value, pos = self.take()
        if kind == "num":
            return const(value)
        if kind == "(":
            inner = self.expression()
            self.expect(")")
            return inner
        if kind == "ident":
            if value in _FUNC_TOKENS:
                self.expect("(")
                arg = self.expression()
                self.expect(")")
                return node(_FUNC_TOKENS[value], arg)
            if value in _CONSTANTS:
                return const(_CONSTANTS[value])
            return var(value)
        raise ParseError(f"unexpected token {value!r}", pos)


def parse(text: str) -> ExpressionNode:
    """Parse infix text into an expression tree."""
    return _Parser(text).parse()


_PREC = {"add": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}


def to_string(n: ExpressionNode, _prec: int = 0) -> str:
    """Render a tree; parsing the result reproduces the identical tree."""
    if n.op == "var":
        return n.name
    if n.op == "const":
        return repr(n.value) if n.value >= 0 else f"-{abs(n.value)!r}"
    if n.op in ("sin", "cos", "exp", "log", "abs"):
        return f"{n.op}({to_string(n.children[0])})"
    if n.op == "neg":
        text = f"-{to_string(n.children[0], 3)}"
    elif n.op == "add":
        left, right = n.children
        if right.op == "neg":
            text = f"{to_string(left, 1)} - {to_string(right.children[0], 2)}"
        else:
            text = f"{to_string(left, 1)} + {to_string(right, 2)}"
    elif n.op in ("mul", "div"):
        sym = "*" if n.op == "mul" else "/"
        text = f"{to_string(n.children[0], 2)} {sym} {to_string(n.children[1], 3)}"
    elif n.op == "pow":
        text = f"{to_string(n.children[0], 5)}^{to_string(n.children[1], 4)}"
    else:
        raise ValueError(f"unknown op {n.op!r}")
    return f"({text})" if _PREC[n.op] < _prec else text


def evaluate_node(n: ExpressionNode, values: dict) -> float:
    """Evaluate a tree at a point given as a name -> value mapping."""
    if n.op == "var":
        return float(values[n.name])
    if n.op == "const":
        return n.value
    args = [evaluate_node(c, values) for c in n.children]
    if n.op == "add":
        return args[0] + args[1]
    if n.op == "mul":
        return args[0] * args[1]
    if n.op == "div":
        return args[0] / args[1]
    if n.op == "pow":
        return args[0] ** args[1]
    if n.op == "neg":
        return -args[0]
    if n.op == "abs":
        return abs(args[0])
    if n.op == "log":
        return math.log(args[0])
    return getattr(math, n.op)(args[0])


# ---------------------------------------------------------------------------
# Interval arithmetic
# ---------------------------------------------------------------------------


def _iadd(a: Interval, b: Interval) -> Interval:
    return Interval(a.lo + b.lo, a.hi + b.hi)


def _ineg(a: Interval) -> Interval:
    return Interval(-a.hi, -a.lo)


def _imul(a: Interval, b: Interval) -> Interval:
    products = (a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi)
    return Interval(min(products), max(products))


def _idiv(a: Interval, b: Interval) -> Interval:
    if b.lo <= 0.0 <= b.hi:
        raise DomainViolation(f"division by interval [{b.lo}, {b.hi}] containing zero")
    return _imul(a, Interval(1.0 / b.hi, 1.0 / b.lo))


def _ipow(a: Interval, n: int) -> Interval:
    if n == 0:
        return Interval(1.0, 1.0)
    if n < 0:
        return _idiv(Interval(1.0, 1.0), _ipow(a, -n))
    lo, hi = a.lo**n, a.hi**n
    if n % 2 == 0 and a.lo < 0.0 < a.hi:
        return Interval(0.0, max(lo, hi))
    return Interval(min(lo, hi), max(lo, hi))


def _isin(a: Interval) -> Interval:
    if a.length >= 2.0 * math.pi:
        return Interval(-1.0, 1.0)
    candidates = [math.sin(a.lo), math.sin(a.hi)]
    half = math.pi / 2.0
    # peaks at pi/2 + 2k pi, troughs at -pi/2 + 2k pi
    k = math.ceil((a.lo - half) / (2.0 * math.pi))
    if half + 2.0 * math.pi * k <= a.hi:
        candidates.append(1.0)
    k = math.ceil((a.lo + half) / (2.0 * math.pi))
    if -half + 2.0 * math.pi * k <= a.hi:
        candidates.append(-1.0)
    return Interval(min(candidates), max(candidates))


def _icos(a: Interval) -> Interval:
    return _isin(Interval(a.lo + math.pi / 2.0, a.hi + math.pi / 2.0))


def _iexp(a: Interval) -> Interval:
    return Interval(math.exp(a.lo), math.exp(a.hi))


def _ilog(a: Interval) -> Interval:
    if a.lo <= 0.0:
        raise DomainViolation(f"log of interval [{a.lo}, {a.hi}] touching zero")
    return Interval(math.log(a.lo), math.log(a.hi))


def _iabs(a: Interval) -> Interval:
    if a.lo >= 0.0:
        return a
    if a.hi <= 0.0:
        return _ineg(a)
    return Interval(0.0, max(-a.lo, a.hi))


def propagate_bounds(root: ExpressionNode, bounds: dict) -> dict:
    """Interval for every node of the tree given name -> Interval variable bounds."""
    memo: dict = {}

    def visit(n: ExpressionNode) -> Interval:
        if n in memo:
            return memo[n]
        if n.op == "var":
            if n.name not in bounds:
                raise UnsupportedOperation(f"no bounds for variable {n.name!r}")
            result = bounds[n.name]
        elif n.op == "const":
            result = Interval(n.value, n.value)
        elif n.op == "add":
            result = _iadd(visit(n.children[0]), visit(n.children[1]))
        elif n.op == "neg":
            result = _ineg(visit(n.children[0]))
        elif n.op == "mul":
            result = _imul(visit(n.children[0]), visit(n.children[1]))
        elif n.op == "div":
            result = _idiv(visit(n.children[0]), visit(n.children[1]))
        elif n.op == "pow":
            exponent = n.children[1]
            if exponent.op != "const" or exponent.value != int(exponent.value):
                raise UnsupportedOperation("pow requires an integer constant exponent")
            result = _ipow(visit(n.children[0]), int(exponent.value))
        elif n.op == "sin":
            result = _isin(visit(n.children[0]))
        elif n.op == "cos":
            result = _icos(visit(n.children[0]))
        elif n.op == "exp":
            result = _iexp(visit(n.children[0]))
        elif n.op == "log":
            result = _ilog(visit(n.children[0]))
        elif n.op == "abs":
            result = _iabs(visit(n.children[0]))
        else:
            raise ValueError(f"unknown op {n.op!r}")
        memo[n] = result
        return result

    visit(root)
    return memo


def function_range(f: UnivariateFunction, interval: Interval) -> Interval:
    """Image interval of a univariate function over an interval."""
    q_lo = f.pre_scale * interval.lo + f.pre_shift
    q_hi = f.pre_scale * interval.hi + f.pre_shift
    q = Interval(min(q_lo, q_hi), max(q_lo, q_hi))
    base = {"sin": _isin, "cos": _icos, "exp": _iexp, "ln": _ilog}[f.kind](q)
    scaled = _imul(base, Interval(f.post_scale, f.post_scale))
    shifted = _iadd(scaled, Interval(f.post_shift, f.post_shift))
    return _ineg(shifted) if f.negated else shifted


# ---------------------------------------------------------------------------
# Factored problem
# ---------------------------------------------------------------------------


@dataclass
class Variable:
    name: str
    lb: float
    ub: float
    integer: bool = False


@dataclass
class LinearRow:
    coeffs: dict   # var index -> coefficient
    sense: str     # "LE" | "GE" | "EQ"
    rhs: float


@dataclass
class QuadraticRow:
    quad: dict     # (i, j) with i <= j -> coefficient
    coeffs: dict
    sense: str
    rhs: float


@dataclass
class UnivariateConstraint:
    function: UnivariateFunction
    x_index: int
    y_index: int
    domain: Interval
    sense: str     # "LE": f(x) <= y ; "GE": f(x) >= y


@dataclass
class FactoredProblem:
    variables: list
    objective: list
    linear_rows: list = field(default_factory=list)
    quadratic_rows: list = field(default_factory=list)
    univariate: list = field(default_factory=list)
    n_original: int = 0
    aux_defs: dict = field(default_factory=dict)  # index -> evaluation recipe

    @property
    def n(self) -> int:
        return len(self.variables)

    def index_of(self, name: str) -> int:
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise KeyError(name)

    def complete_point(self, original_values) -> list:
        """Extend values of the original variables to the full vector.

        Auxiliary product/ratio/function variables are evaluated from their
        defining recipes in creation order.
        """
        if isinstance(original_values, dict):
            point = [float(original_values[v.name]) for v in self.variables[: self.n_original]]
        else:
            point = [float(v) for v in original_values]
        if len(point) != self.n_original:
            raise ValueError("need one value per original variable")
        point = point + [0.0] * (self.n - self.n_original)
        for idx in range(self.n_original, self.n):
            recipe = self.aux_defs[idx]
            if recipe[0] == "poly":
                _, cst, lin, quad = recipe
                v = cst + sum(c * point[i] for i, c in lin.items())
                v += sum(c * point[i] * point[j] for (i, j), c in quad.items())
            elif recipe[0] == "ratio":
                _, num, den = recipe
                nv = num[0] + sum(c * point[i] for i, c in num[1].items())
                dv = den[0] + sum(c * point[i] for i, c in den[1].items())
                v = nv / dv
            elif recipe[0] == "unary":
                _, fn, xi = recipe
                v = fn.evaluate(point[xi])
            else:
                raise ValueError(f"unknown recipe {recipe[0]!r}")
            point[idx] = v
        return point

    def max_violation(self, point) -> float:
        """Worst constraint violation at a full-length point (0 when feasible)."""
        worst = 0.0

        def residual(value, sense, rhs):
            if sense == "LE":
                return value - rhs
            if sense == "GE":
                return rhs - value
            return abs(value - rhs)

        for row in self.linear_rows:
            value = sum(c * point[i] for i, c in row.coeffs.items())
            worst = max(worst, residual(value, row.sense, row.rhs))
        for row in self.quadratic_rows:
            value = sum(c * point[i] for i, c in row.coeffs.items())
            value += sum(c * point[i] * point[j] for (i, j), c in row.quad.items())
            worst = max(worst, residual(value, row.sense, row.rhs))
        for uc in self.univariate:
            fx = uc.function.evaluate(point[uc.x_index])
            y = point[uc.y_index]
            worst = max(worst, fx - y if uc.sense == "LE" else y - fx)
        return worst


class _Reformulator:
    def __init__(self, variables: list):
        self.problem = FactoredProblem(
            variables=[Variable(v.name, v.lb, v.ub, v.integer) for v in variables],
            objective=[0.0] * len(variables),
            n_original=len(variables),
        )
        for v in self.problem.variables:
            if not (math.isfinite(v.lb) and math.isfinite(v.ub)):
                raise DomainViolation(f"variable {v.name} needs finite bounds")
        self.name_to_index = {v.name: i for i, v in enumerate(self.problem.variables)}
        self.unary_cache: dict = {}
        self.counter = 0

    # -- variable helpers ---------------------------------------------------

    def var_interval(self, idx: int) -> Interval:
        v = self.problem.variables[idx]
        return Interval(v.lb, v.ub)

    def affine_interval(self, affine) -> Interval:
        cst, lin = affine
        result = Interval(cst, cst)
        for i, c in lin.items():
            result = _iadd(result, _imul(self.var_interval(i), Interval(c, c)))
        return result

    def new_variable(self, prefix: str, bounds: Interval) -> int:
        self.counter += 1
        name = f"_{prefix}{self.counter}"
        self.problem.variables.append(Variable(name, bounds.lo, bounds.hi, False))
        self.problem.objective.append(0.0)
        return len(self.problem.variables) - 1

    # -- affine reduction ---------------------------------------------------

    def to_affine(self, n: ExpressionNode):
        """Affine expression (constant, {index: coef}) for a node, introducing
        auxiliary variables for products, ratios, powers and function values."""
        if n.op == "const":
            return (n.value, {})
        if n.op == "var":
            if n.name not in self.name_to_index:
                raise UnsupportedOperation(f"undeclared variable {n.name!r}")
            return (0.0, {self.name_to_index[n.name]: 1.0})
        if n.op == "add":
            c1, l1 = self.to_affine(n.children[0])
            c2, l2 = self.to_affine(n.children[1])
            merged = dict(l1)
            for i, c in l2.items():
                merged[i] = merged.get(i, 0.0) + c
            return (c1 + c2, merged)
        if n.op == "neg":
            c1, l1 = self.to_affine(n.children[0])
            return (-c1, {i: -c for i, c in l1.items()})
        if n.op == "mul":
            ra = self.to_affine(n.children[0])
            rb = self.to_affine(n.children[1])
            if not ra[1]:
                return (ra[0] * rb[0], {i: ra[0] * c for i, c in rb[1].items()})
            if not rb[1]:
                return (rb[0] * ra[0], {i: rb[0] * c for i, c in ra[1].items()})
            return (0.0, {self.product_var(ra, rb): 1.0})
        if n.op == "div":
            rb = self.to_affine(n.children[1])
            if not rb[1]:
                if rb[0] == 0.0:
                    raise DomainViolation("division by literal zero")
                ca, la = self.to_affine(n.children[0])
                return (ca / rb[0], {i: c / rb[0] for i, c in la.items()})
            ra = self.to_affine(n.children[0])
            return (0.0, {self.ratio_var(ra, rb): 1.0})
        if n.op == "pow":
            exponent = n.children[1]
            if exponent.op != "const" or exponent.value != int(exponent.value):
                raise UnsupportedOperation("pow requires an integer constant exponent")
            k = int(exponent.value)
            base = n.children[0]
            if k == 0:
                return (1.0, {})
            if k == 1:
                return self.to_affine(base)
            if k < 0:
                return self.to_affine(
                    node("div", const(1.0), node("pow", base, const(float(-k)))))
            return self.to_affine(node("mul", node("pow", base, const(float(k - 1))), base))
        if n.op == "abs":
            return self.to_affine(self.resolve_abs(n))
        if n.op in ("sin", "cos", "exp", "log"):
            return self.unary_value(n, pair=True)
        raise UnsupportedOperation(f"cannot reformulate op {n.op!r}")

    def resolve_abs(self, n: ExpressionNode) -> ExpressionNode:
        child = n.children[0]
        bounds = {v.name: Interval(v.lb, v.ub) for v in self.problem.variables}
        child_iv = propagate_bounds(child, bounds)[child]
        if child_iv.lo >= 0.0:
            return child
        if child_iv.hi <= 0.0:
            return node("neg", child)
        raise UnsupportedOperation(
            "abs with sign-ambiguous argument cannot be linearized")

    def expand_product(self, ra, rb):
        """Quadratic expansion (const, lin, quad) of a product of two affines."""
        ca, la = ra
        cb, lb = rb
        cst = ca * cb
        lin: dict = {}
        quad: dict = {}
        for i, c in la.items():
            lin[i] = lin.get(i, 0.0) + c * cb
        for j, c in lb.items():
            lin[j] = lin.get(j, 0.0) + c * ca
        for i, ci in la.items():
            for j, cj in lb.items():
                key = (min(i, j), max(i, j))
                quad[key] = quad.get(key, 0.0) + ci * cj
        return cst, lin, quad

    def product_var(self, ra, rb) -> int:
        """Auxiliary variable z with quadratic equality z = (affine a) * (affine b)."""
        bounds = _imul(self.affine_interval(ra), self.affine_interval(rb))
        z = self.new_variable("t", bounds)
        cst, lin, quad = self.expand_product(ra, rb)
        lin = dict(lin)
        lin[z] = lin.get(z, 0.0) - 1.0
        self.problem.quadratic_rows.append(
            QuadraticRow(quad=quad, coeffs=lin, sense="EQ", rhs=-cst))
        self.problem.aux_defs[z] = ("poly", cst, {i: c for i, c in lin.items() if i != z}, quad)
        return z

    def ratio_var(self, ra, rb) -> int:
        """Auxiliary variable z with quadratic equality z * (affine b) = affine a."""
        bounds = _idiv(self.affine_interval(ra), self.affine_interval(rb))
        z = self.new_variable("t", bounds)
        cst, lin, quad = self.expand_product((0.0, {z: 1.0}), rb)
        ca, la = ra
        for i, c in la.items():
            lin[i] = lin.get(i, 0.0) - c
        self.problem.quadratic_rows.append(
            QuadraticRow(quad=quad, coeffs=lin, sense="EQ", rhs=ca - cst))
        self.problem.aux_defs[z] = ("ratio", ra, rb)
        return z

    def affine_var(self, affine) -> int:
        """Auxiliary variable tied to a multi-variable affine expression."""
        cst, lin = affine
        z = self.new_variable("t", self.affine_interval(affine))
        coeffs = dict(lin)
        coeffs[z] = coeffs.get(z, 0.0) - 1.0
        self.problem.linear_rows.append(LinearRow(coeffs=coeffs, sense="EQ", rhs=-cst))
        self.problem.aux_defs[z] = ("poly", cst, lin, {})
        return z

    # -- univariate constraints ----------------------------------------------

    def unary_value(self, n: ExpressionNode, pair: bool, sense: str = "LE"):
        """Affine handle {y: 1} for a nonlinear unary node, creating the
        univariate constraint records (a pair when required)."""
        arg = self.to_affine(n.children[0])
        cst, lin = arg
        if not lin:
            value = evaluate_node(n, {})
            return (value, {})
        if len(lin) == 1:
            (xi, scale), = lin.items()
            fn = UnivariateFunction(_KIND_FOR_OP[n.op], pre_scale=scale, pre_shift=cst)
        else:
            xi = self.affine_var(arg)
            fn = UnivariateFunction(_KIND_FOR_OP[n.op])
        domain = self.var_interval(xi)
        if not fn.valid_on(domain):
            raise DomainViolation(
                f"{n.op} argument can be non-positive on [{domain.lo}, {domain.hi}]")

        cache_key = (fn, xi)
        if cache_key in self.unary_cache:
            y, senses = self.unary_cache[cache_key]
        else:
            y = self.new_variable("y", function_range(fn, domain))
            senses = set()
            self.unary_cache[cache_key] = (y, senses)
            self.problem.aux_defs[y] = ("unary", fn, xi)
        wanted = {"LE", "GE"} if pair else {sense}
        for s in sorted(wanted - senses):
            self.problem.univariate.append(
                UnivariateConstraint(function=fn, x_index=xi, y_index=y,
                                     domain=domain, sense=s))
            senses.add(s)
        return (0.0, {y: 1.0})

    # -- constraint assembly --------------------------------------------------

    def add_constraint(self, root: ExpressionNode, rhs: float):
        cst = 0.0
        lin: dict = {}
        quad: dict = {}

        def merge_affine(affine, coef):
            nonlocal cst
            cst += coef * affine[0]
            for i, c in affine[1].items():
                lin[i] = lin.get(i, 0.0) + coef * c

        def merge_quad(expansion, coef):
            nonlocal cst
            q_cst, q_lin, q_quad = expansion
            cst += coef * q_cst
            for i, c in q_lin.items():
                lin[i] = lin.get(i, 0.0) + coef * c
            for key, c in q_quad.items():
                quad[key] = quad.get(key, 0.0) + coef * c

        worklist = [(1.0, root)]
        while worklist:
            coef, n = worklist.pop()
            if coef == 0.0:
                continue
            if n.op == "const":
                cst += coef * n.value
            elif n.op == "add":
                worklist.append((coef, n.children[0]))
                worklist.append((coef, n.children[1]))
            elif n.op == "neg":
                worklist.append((-coef, n.children[0]))
            elif n.op == "mul" and n.children[0].op == "const":
                worklist.append((coef * n.children[0].value, n.children[1]))
            elif n.op == "mul" and n.children[1].op == "const":
                worklist.append((coef * n.children[1].value, n.children[0]))
            elif n.op == "var":
                merge_affine(self.to_affine(n), coef)
            elif n.op in ("sin", "cos", "exp", "log"):
                # top-level additive occurrence: one inequality direction suffices
                merge_affine(self.unary_value(n, pair=False,
                                              sense="LE" if coef > 0 else "GE"), coef)
            elif n.op == "abs":
                worklist.append((coef, self.resolve_abs(n)))
            elif n.op == "mul":
                ra = self.to_affine(n.children[0])
                rb = self.to_affine(n.children[1])
                if not ra[1] or not rb[1]:
                    merge_affine(self.to_affine(n), coef)
                else:
                    merge_quad(self.expand_product(ra, rb), coef)
            elif n.op == "pow" and n.children[1].op == "const" \
                    and n.children[1].value == 2.0:
                ra = self.to_affine(n.children[0])
                merge_quad(self.expand_product(ra, ra), coef)
            else:
                merge_affine(self.to_affine(n), coef)

        row_rhs = rhs - cst
        if quad:
            self.problem.quadratic_rows.append(
                QuadraticRow(quad=quad, coeffs=lin, sense="LE", rhs=row_rhs))
        else:
            self.problem.linear_rows.append(
                LinearRow(coeffs=lin, sense="LE", rhs=row_rhs))

    def set_objective(self, coeffs: dict):
        for name, coef in coeffs.items():
            if name not in self.name_to_index:
                raise UnsupportedOperation(f"objective references unknown variable {name!r}")
            self.problem.objective[self.name_to_index[name]] = float(coef)


def reformulate(constraints: list, objective: dict, variables: list) -> FactoredProblem:
    """Rewrite constraints (expression <= rhs) into the factored normal form.

    constraints: list of (ExpressionNode, rhs) pairs; objective: name -> coef;
    variables: list of Variable with finite bounds and integrality flags.
    """
    ref = _Reformulator(variables)
    ref.set_objective(objective)
    for root, rhs in constraints:
        ref.add_constraint(root, float(rhs))
    return ref.problem


def problem_from_envelope(data: dict) -> FactoredProblem:
    """Build a factored problem from the JSON problem envelope.

    Envelope: {"variables": [{name, lb, ub, integer?}], "objective":
    {"coeffs": {name: coef}}, "constraints": [{"expr": text, "rhs": value}]}.
    """
    variables = [
        Variable(v["name"], float(v["lb"]), float(v["ub"]), bool(v.get("integer", False)))
        for v in data["variables"]
    ]
    constraints = [(parse(c["expr"]), float(c.get("rhs", 0.0)))
                   for c in data["constraints"]]
    objective = data.get("objective", {}).get("coeffs", {})
    return reformulate(constraints, objective, variables)
