"""Relaxed model materialization, text emission, and a desk-scale checker.

A RelaxedModel is a flat list of variables and rows (linear or quadratic,
each with a provenance note).  PARA relaxations replace every univariate
constraint by its parabola rows without new variables; PWL relaxations add
the incremental-method block per constraint: fill variables delta_k in [0,1]
gated by binaries u_k, an x-linking equality, and the interpolation
inequality with shifted node values.  The interpolation value is substituted
directly into its inequality, so a block adds exactly 2K-1 variables.

brute_force_check grid-enumerates a relaxed model against the original
factored problem and tests the relaxation sandwich.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionTooLarge, DomainMismatch
from .expr import FactoredProblem
from .functions import Interval


@dataclass
class ModelVariable:
    name: str
    lb: float
    ub: float
    integer: bool = False


@dataclass
class Row:
    name: str
    lin: dict            # var name -> coefficient
    quad: dict           # (name, name) sorted -> coefficient
    sense: str           # "LE" | "GE" | "EQ"
    rhs: float
    note: str = ""


@dataclass
class RelaxedModel:
    variables: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    objective: dict = field(default_factory=dict)  # var name -> coefficient
    epsilon: float = 0.0

    def variable_names(self) -> list:
        return [v.name for v in self.variables]

    def n_binary(self) -> int:
        return sum(1 for v in self.variables if v.integer and v.lb == 0 and v.ub == 1)


_SENSE_TEXT = {"LE": "<=", "GE": ">=", "EQ": "="}
_TEXT_SENSE = {v: k for k, v in _SENSE_TEXT.items()}


def _base_model(problem: FactoredProblem) -> RelaxedModel:
    model = RelaxedModel()
    names = []
    for v in problem.variables:
        model.variables.append(ModelVariable(v.name, v.lb, v.ub, v.integer))
        names.append(v.name)
    model.objective = {
        names[i]: c for i, c in enumerate(problem.objective) if c != 0.0
    }
    for k, row in enumerate(problem.linear_rows):
        model.rows.append(Row(
            name=f"lin{k}",
            lin={names[i]: c for i, c in row.coeffs.items()},
            quad={},
            sense=row.sense,
            rhs=row.rhs,
            note=f"omega lin[{k}]",
        ))
    for k, row in enumerate(problem.quadratic_rows):
        model.rows.append(Row(
            name=f"quad{k}",
            lin={names[i]: c for i, c in row.coeffs.items()},
            quad={tuple(sorted((names[i], names[j]))): c
                  for (i, j), c in row.quad.items()},
            sense=row.sense,
            rhs=row.rhs,
            note=f"omega quad[{k}]",
        ))
    return model


def _check_coverage(problem: FactoredProblem, j: int, domain: Interval):
    uc = problem.univariate[j]
    var = problem.variables[uc.x_index]
    if not domain.contains_interval(Interval(var.lb, var.ub), tol=1e-12):
        raise DomainMismatch(
            f"approximation domain [{domain.lo}, {domain.hi}] does not cover "
            f"bounds [{var.lb}, {var.ub}] of {var.name}")


def emit_para(problem: FactoredProblem, approximations: dict) -> RelaxedModel:
    """Replace each univariate constraint by its parabola rows.

    approximations maps the index of each univariate constraint to a
    ParaApproximation whose side matches the constraint direction (under for
    f(x) <= y, over for f(x) >= y).  Adds zero variables and K_j rows per
    constraint.
    """
    model = _base_model(problem)
    eps = 0.0
    for j, uc in enumerate(problem.univariate):
        approx = approximations[j]
        _check_coverage(problem, j, approx.domain)
        wanted = "under" if uc.sense == "LE" else "over"
        if approx.side != wanted:
            raise DomainMismatch(
                f"univariate[{j}] needs a {wanted}-side approximation, got {approx.side}")
        eps = max(eps, approx.epsilon)
        x = problem.variables[uc.x_index].name
        y = problem.variables[uc.y_index].name
        sense = "LE" if uc.sense == "LE" else "GE"
        for k, pc in enumerate(approx.pieces):
            p = pc.parabola
            model.rows.append(Row(
                name=f"u{j}p{k}",
                lin={x: p.b, y: -1.0},
                quad={(x, x): p.a},
                sense=sense,
                rhs=-p.c,
                note=f"para univ[{j}] piece {k + 1}/{approx.K}",
            ))
    model.epsilon = eps
    return model


def emit_pwl(problem: FactoredProblem, relaxations: dict) -> RelaxedModel:
    """Incremental-method rows for every univariate constraint.

    relaxations maps univariate-constraint indices to PwlApproximation
    objects (typically from relax_shift, so the interpolant sits shift below
    the nodes and the relaxation band is 2 * shift).  Constraints sharing the
    same (function, x, y), i.e. an equality pair, share one delta/u block; the
    upper direction reuses the block with the envelope shifted up.
    """
    model = _base_model(problem)
    eps = 0.0

    groups: dict = {}
    for j, uc in enumerate(problem.univariate):
        key = (uc.x_index, uc.y_index, uc.function)
        groups.setdefault(key, []).append(j)

    for g, (key, members) in enumerate(sorted(groups.items(),
                                              key=lambda kv: kv[1][0])):
        x_index, y_index, _fn = key
        pwl = relaxations[members[0]]
        for j in members[1:]:
            if relaxations[j] is not pwl and relaxations[j] != pwl:
                raise DomainMismatch(
                    f"equality pair univ{members} must share one relaxation block")
        _check_coverage(problem, members[0], pwl.domain)
        eps = max(eps, 2.0 * pwl.shift)
        x = problem.variables[x_index].name
        y = problem.variables[y_index].name
        t = pwl.breakpoints
        v = pwl.values
        K = pwl.K

        deltas = [f"_pwl{g}_d{k}" for k in range(1, K + 1)]
        us = [f"_pwl{g}_u{k}" for k in range(1, K)]
        taken = set(model.variable_names())
        for name in deltas + us:
            if name in taken:
                raise DomainMismatch(f"auxiliary name collision on {name}")
        for name in deltas:
            model.variables.append(ModelVariable(name, 0.0, 1.0, False))
        for name in us:
            model.variables.append(ModelVariable(name, 0.0, 1.0, True))

        blk = f"pwl[{g}]"
        # x = t0 + sum delta_k (t_k - t_{k-1})
        lin = {x: 1.0}
        for k in range(K):
            lin[deltas[k]] = -(t[k + 1] - t[k])
        model.rows.append(Row(name=f"p{g}x", lin=lin, quad={}, sense="EQ",
                              rhs=t[0], note=f"{blk} x-link x={x}"))
        # ordering chain
        for k in range(K - 1):
            model.rows.append(Row(
                name=f"p{g}du{k + 1}", lin={deltas[k + 1]: 1.0, us[k]: -1.0},
                quad={}, sense="LE", rhs=0.0, note=f"{blk} chain d{k + 2}<=u{k + 1}"))
            model.rows.append(Row(
                name=f"p{g}ud{k + 1}", lin={us[k]: 1.0, deltas[k]: -1.0},
                quad={}, sense="LE", rhs=0.0, note=f"{blk} chain u{k + 1}<=d{k + 1}"))
        for k in range(K - 2):
            model.rows.append(Row(
                name=f"p{g}uu{k + 1}", lin={us[k + 1]: 1.0, us[k]: -1.0},
                quad={}, sense="LE", rhs=0.0, note=f"{blk} chain u{k + 2}<=u{k + 1}"))
        model.rows.append(Row(name=f"p{g}d1", lin={deltas[0]: 1.0}, quad={},
                              sense="LE", rhs=1.0, note=f"{blk} edge d1<=1"))
        model.rows.append(Row(name=f"p{g}dK", lin={deltas[-1]: 1.0}, quad={},
                              sense="GE", rhs=0.0, note=f"{blk} edge dK>=0"))
        # interpolation value substituted into its inequality:
        # w = (v0 - shift) + sum delta_k (v_k - v_{k-1})
        w_lin = {deltas[k]: (v[k + 1] - v[k]) for k in range(K)}
        for j in members:
            uc = problem.univariate[j]
            lin = dict(w_lin)
            lin[y] = -1.0
            if uc.sense == "LE":
                model.rows.append(Row(
                    name=f"p{g}w{j}", lin=lin, quad={}, sense="LE",
                    rhs=-(v[0] - pwl.shift),
                    note=f"{blk} w<= univ[{j}] y={y}"))
            else:
                model.rows.append(Row(
                    name=f"p{g}w{j}", lin=lin, quad={}, sense="GE",
                    rhs=-(v[0] + pwl.shift),
                    note=f"{blk} w>= univ[{j}] y={y}"))
    model.epsilon = eps
    return model


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _format_terms(lin: dict, quad: dict) -> str:
    parts = []
    for (a, b), c in quad.items():
        parts.append(f"{c!r} {a}^2" if a == b else f"{c!r} {a}*{b}")
    for name, c in lin.items():
        parts.append(f"{c!r} {name}")
    return " + ".join(parts) if parts else "0.0"


def write_model(model: RelaxedModel, fmt: str = "lp-text") -> str:
    """Deterministic text rendering; read_model inverts it exactly."""
    if fmt == "json":
        return json.dumps(model_to_dict(model), indent=2) + "\n"
    if fmt != "lp-text":
        raise ValueError(f"unknown format {fmt!r}")
    lines = ["OBJECTIVE"]
    lines.append(" min: " + _format_terms(model.objective, {}))
    lines.append("SUBJECT TO")
    for row in model.rows:
        text = f" {row.name}: {_format_terms(row.lin, row.quad)} " \
               f"{_SENSE_TEXT[row.sense]} {row.rhs!r}"
        if row.note:
            text += f"  \\ {row.note}"
        lines.append(text)
    lines.append("BOUNDS")
    for v in model.variables:
        lines.append(f" {v.lb!r} <= {v.name} <= {v.ub!r}")
    lines.append("GENERAL")
    for v in model.variables:
        if v.integer:
            lines.append(f" {v.name}")
    lines.append(f"EPSILON {model.epsilon!r}")
    lines.append("END")
    return "\n".join(lines) + "\n"


_TERM_RE = re.compile(
    r"(?P<coef>[^\s]+) (?P<a>[A-Za-z_][\w]*)(?:\^2|\*(?P<b>[A-Za-z_][\w]*))?$")


def _parse_terms(text: str):
    lin: dict = {}
    quad: dict = {}
    text = text.strip()
    if text == "0.0":
        return lin, quad
    for part in text.split(" + "):
        m = _TERM_RE.match(part.strip())
        if not m:
            raise ValueError(f"cannot parse term {part!r}")
        coef = float(m.group("coef"))
        a = m.group("a")
        if part.strip().endswith("^2"):
            quad[(a, a)] = coef
        elif m.group("b"):
            quad[(a, m.group("b"))] = coef
        else:
            lin[a] = coef
    return lin, quad


def read_model(text: str, fmt: str = "lp-text") -> RelaxedModel:
    if fmt == "json":
        return model_from_dict(json.loads(text))
    model = RelaxedModel()
    section = None
    integers = set()
    bounds = []
    for raw_line in text.splitlines():
        line = raw_line.strip()
        if not line or line == "END":
            continue
        if line in ("OBJECTIVE", "SUBJECT TO", "BOUNDS", "GENERAL"):
            section = line
            continue
        if line.startswith("EPSILON"):
            model.epsilon = float(line.split()[1])
            continue
        if section == "OBJECTIVE":
            body = line.split(":", 1)[1].strip()
            model.objective, _ = _parse_terms(body)
        elif section == "SUBJECT TO":
            note = ""
            if "\\" in line:
                line, note = line.split("\\", 1)
                note = note.strip()
            name, body = line.split(":", 1)
            m = re.match(r"(.*) (<=|>=|=) ([^\s]+)$", body.strip())
            if not m:
                raise ValueError(f"cannot parse row {line!r}")
            lin, quad = _parse_terms(m.group(1))
            model.rows.append(Row(name=name.strip(), lin=lin, quad=quad,
                                  sense=_TEXT_SENSE[m.group(2)],
                                  rhs=float(m.group(3)), note=note))
        elif section == "BOUNDS":
            m = re.match(r"([^\s]+) <= ([\w]+) <= ([^\s]+)$", line)
            if not m:
                raise ValueError(f"cannot parse bound {line!r}")
            bounds.append(ModelVariable(m.group(2), float(m.group(1)),
                                        float(m.group(3)), False))
        elif section == "GENERAL":
            integers.add(line)
    for v in bounds:
        v.integer = v.name in integers
    model.variables = bounds
    return model


def model_to_dict(model: RelaxedModel) -> dict:
    return {
        "variables": [
            {"name": v.name, "lb": v.lb, "ub": v.ub, "integer": v.integer}
            for v in model.variables
        ],
        "objective": dict(model.objective),
        "rows": [
            {
                "name": r.name,
                "lin": dict(r.lin),
                "quad": [[a, b, c] for (a, b), c in r.quad.items()],
                "sense": r.sense,
                "rhs": r.rhs,
                "note": r.note,
            }
            for r in model.rows
        ],
        "epsilon": model.epsilon,
    }


def model_from_dict(data: dict) -> RelaxedModel:
    model = RelaxedModel(epsilon=float(data.get("epsilon", 0.0)))
    model.variables = [
        ModelVariable(v["name"], float(v["lb"]), float(v["ub"]), bool(v["integer"]))
        for v in data["variables"]
    ]
    model.objective = {k: float(c) for k, c in data["objective"].items()}
    for r in data["rows"]:
        model.rows.append(Row(
            name=r["name"],
            lin={k: float(c) for k, c in r["lin"].items()},
            quad={(a, b): float(c) for a, b, c in r["quad"]},
            sense=r["sense"],
            rhs=float(r["rhs"]),
            note=r.get("note", ""),
        ))
    return model


# ---------------------------------------------------------------------------
# Brute-force sandwich checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckReport:
    original_optimum: float
    relaxed_optimum: float
    epsilon: float
    points: int
    lower_ok: bool        # relaxed optimum <= original optimum
    upper_ok: bool        # original optimum <= relaxed optimum + epsilon
    sandwich_ok: bool


def _grid_axes(problem: FactoredProblem, grid: int):
    continuous = []
    integer = []
    for v in problem.variables[: problem.n_original]:
        (integer if v.integer else continuous).append(v)
    if len(continuous) > 2:
        raise DimensionTooLarge(
            f"{len(continuous)} continuous dimensions exceed the brute-force limit of 2")
    axes = {}
    for v in integer:
        values = np.arange(math.ceil(v.lb), math.floor(v.ub) + 1, dtype=float)
        if values.size > 8:
            raise DimensionTooLarge(f"integer {v.name} spans {values.size} > 8 values")
        axes[v.name] = values
    per_axis = max(2, int(round(grid ** (1.0 / len(continuous))))) if continuous else 1
    for v in continuous:
        axes[v.name] = np.linspace(v.lb, v.ub, per_axis)
    return axes


def _pwl_blocks(model: RelaxedModel):
    """Group the incremental-method rows by block id from provenance notes."""
    blocks: dict = {}
    pattern = re.compile(r"^pwl\[(\d+)\]")
    for row in model.rows:
        m = pattern.match(row.note)
        if m:
            blocks.setdefault(int(m.group(1)), []).append(row)
    return blocks


def _fill_block(rows, values: dict):
    """Canonical delta/u assignment for each grid point from the x-link row."""
    xlink = next(r for r in rows if "x-link" in r.note)
    x_name = next(n for n, c in xlink.lin.items() if c == 1.0 and not n.startswith("_pwl"))
    deltas = sorted((n for n in xlink.lin if n.startswith("_pwl")),
                    key=lambda n: int(n.rsplit("d", 1)[1]))
    widths = [-xlink.lin[n] for n in deltas]
    t0 = xlink.rhs
    remaining = values[x_name] - t0
    for name, width in zip(deltas, widths):
        d = np.clip(remaining / width, 0.0, 1.0)
        values[name] = d
        remaining = remaining - d * width
    for name in deltas:
        u_name = name.replace("_d", "_u")
        k = int(name.rsplit("d", 1)[1])
        if k < len(deltas):
            values[u_name] = (values[name] >= 1.0 - 1e-12).astype(float)


def _row_values(row: Row, values: dict):
    total = np.zeros_like(next(iter(values.values())))
    for name, c in row.lin.items():
        total = total + c * values[name]
    for (a, b), c in row.quad.items():
        total = total + c * values[a] * values[b]
    return total


def _feasible_mask(rows, values: dict, tol: float):
    mask = None
    for row in rows:
        total = _row_values(row, values)
        slack = tol * (1.0 + abs(row.rhs))
        if row.sense == "LE":
            ok = total <= row.rhs + slack
        elif row.sense == "GE":
            ok = total >= row.rhs - slack
        else:
            ok = np.abs(total - row.rhs) <= slack
        mask = ok if mask is None else (mask & ok)
    return mask


def _complete_arrays(problem: FactoredProblem, values: dict) -> dict:
    """Vectorized canonical completion of the auxiliary variables.

    Product/ratio variables take their defining values; function variables
    take f(x).  This is the loosest completion for the original problem: an
    original point is feasible iff its completion is.
    """
    out = dict(values)
    for idx in range(problem.n_original, problem.n):
        name = problem.variables[idx].name
        recipe = problem.aux_defs[idx]
        if recipe[0] == "poly":
            _, cst, lin, quad = recipe
            v = cst + sum(c * out[problem.variables[i].name] for i, c in lin.items())
            for (i, j), c in quad.items():
                v = v + c * out[problem.variables[i].name] * out[problem.variables[j].name]
        elif recipe[0] == "ratio":
            _, num, den = recipe
            nv = num[0] + sum(c * out[problem.variables[i].name] for i, c in num[1].items())
            dv = den[0] + sum(c * out[problem.variables[i].name] for i, c in den[1].items())
            v = nv / dv
        else:
            _, fn, xi = recipe
            v = fn.evaluate(out[problem.variables[xi].name])
        out[name] = v
    return out


def _relaxation_rows_by_constraint(model: RelaxedModel):
    """Rows that replace univariate constraints, grouped by constraint index."""
    by_univ: dict = {}
    pattern = re.compile(r"univ\[(\d+)\]")
    for row in model.rows:
        if row.note.startswith(("para", "pwl")) and "univ[" in row.note:
            j = int(pattern.search(row.note).group(1))
            by_univ.setdefault(j, []).append(row)
    return by_univ


def brute_force_check(model: RelaxedModel, original: FactoredProblem,
                      grid: int = 10000, feas_tol: float = 1e-9) -> CheckReport:
    """Grid-enumerate both problems and test the relaxation sandwich.

    grid is the total point budget, split evenly over the continuous original
    axes (integer variables are enumerated exactly).  Auxiliary variables are
    completed canonically: defining equalities take their exact values, and a
    function variable bound by a single relaxed direction takes the loosest
    value its relaxation rows allow (the envelope), so grid feasibility
    matches the projection onto the original variables.  Both optima use the
    same grid, hence relaxed <= original holds pointwise; the upper comparison
    carries the feas_tol allowance only.
    """
    axes = _grid_axes(original, grid)
    names = list(axes.keys())
    mesh = np.meshgrid(*[axes[n] for n in names], indexing="ij")
    values = {n: m.reshape(-1) for n, m in zip(names, mesh)}
    n_points = next(iter(values.values())).size if values else 1

    objective = np.zeros(n_points)
    for i, c in enumerate(original.objective):
        if c != 0.0 and i < original.n_original:
            objective = objective + c * values[original.variables[i].name]

    # original feasibility: omega rows plus exact univariate rows on the
    # canonical completion
    orig_full = _complete_arrays(original, values)
    base = _base_model(original)
    orig_mask = _feasible_mask(base.rows, orig_full, feas_tol)
    if orig_mask is None:
        orig_mask = np.ones(n_points, dtype=bool)
    for uc in original.univariate:
        fx = uc.function.evaluate(orig_full[original.variables[uc.x_index].name])
        y = orig_full[original.variables[uc.y_index].name]
        resid = fx - y if uc.sense == "LE" else y - fx
        orig_mask &= resid <= feas_tol

    # relaxed feasibility: canonical completion, incremental blocks filled,
    # then single-direction function variables relaxed to their envelope value
    relaxed_full = _complete_arrays(original, values)
    for block_rows in _pwl_blocks(model).values():
        _fill_block(block_rows, relaxed_full)
    by_univ = _relaxation_rows_by_constraint(model)
    y_rows: dict = {}
    for j, rows in by_univ.items():
        y_name = original.variables[original.univariate[j].y_index].name
        y_rows.setdefault(y_name, []).extend(rows)
    for y_name, rows in y_rows.items():
        senses = {r.sense for r in rows}
        if senses == {"LE"} or senses == {"GE"}:
            stack = []
            for row in rows:
                without_y = {n: c for n, c in row.lin.items() if n != y_name}
                partial = Row(row.name, without_y, row.quad, row.sense, row.rhs)
                stack.append(_row_values(partial, relaxed_full) - row.rhs)
            envelope = np.max(stack, axis=0) if senses == {"LE"} else np.min(stack, axis=0)
            relaxed_full[y_name] = envelope
        # equality pairs keep the canonical f(x), which lies inside both envelopes
    relaxed_mask = _feasible_mask(model.rows, relaxed_full, feas_tol)
    if relaxed_mask is None:
        relaxed_mask = np.ones(n_points, dtype=bool)

    original_opt = float(np.min(objective[orig_mask])) if orig_mask.any() else math.inf
    relaxed_opt = float(np.min(objective[relaxed_mask])) if relaxed_mask.any() else math.inf

    lower_ok = relaxed_opt <= original_opt + feas_tol
    upper_ok = original_opt <= relaxed_opt + model.epsilon + feas_tol
    return CheckReport(
        original_optimum=original_opt,
        relaxed_optimum=relaxed_opt,
        epsilon=model.epsilon,
        points=n_points,
        lower_ok=lower_ok,
        upper_ok=upper_ok,
        sandwich_ok=lower_ok and upper_ok,
    )
