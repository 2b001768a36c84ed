import math

import pytest

from parelax.emit import (RelaxedModel, brute_force_check, emit_para, emit_pwl,
                          model_from_dict, model_to_dict, read_model, write_model)
from parelax.errors import DimensionTooLarge, DomainMismatch
from parelax.expr import problem_from_envelope
from parelax.functions import Interval, UnivariateFunction
from parelax.lut import approximate_function
from parelax.para import outer_loop
from parelax.pwl import interpolate, relax_shift

from conftest import toy_envelope

PI = math.pi


def para_approximations(problem, eps, lam=0.9):
    out = {}
    for j, uc in enumerate(problem.univariate):
        side = "under" if uc.sense == "LE" else "over"
        out[j] = approximate_function(uc.function, uc.domain, eps, side, lam)
    return out


def pwl_relaxations(problem, eps):
    blocks = {}
    out = {}
    for j, uc in enumerate(problem.univariate):
        key = (uc.x_index, uc.y_index, uc.function)
        if key not in blocks:
            blocks[key] = relax_shift(uc.function, uc.domain, eps)
        out[j] = blocks[key]
    return out


# -- emission size formulas -----------------------------------------------------


def test_emit_para_adds_no_variables_and_k_rows():
    problem = problem_from_envelope(toy_envelope("sin", 0.1))
    approx = para_approximations(problem, 0.1)
    model = emit_para(problem, approx)
    assert len(model.variables) == problem.n
    base_rows = len(problem.linear_rows) + len(problem.quadratic_rows)
    assert len(model.rows) - base_rows == sum(a.K for a in approx.values())
    assert model.epsilon == 0.1


def test_emit_para_single_sin_single_row():
    # sin on [0, pi] at eps = 1 needs exactly one parabola
    envelope = toy_envelope("sin", 1.0)
    envelope["variables"][0]["ub"] = PI
    problem = problem_from_envelope(envelope)
    approx = para_approximations(problem, 1.0)
    assert approx[0].K == 1
    model = emit_para(problem, approx)
    para_rows = [r for r in model.rows if r.note.startswith("para")]
    assert len(para_rows) == 1
    assert para_rows[0].sense == "LE"


def test_emit_para_empty_univariate_list_is_omega_only():
    envelope = {
        "variables": [{"name": "x1", "lb": 0.0, "ub": 1.0}],
        "objective": {"coeffs": {"x1": 1.0}},
        "constraints": [{"expr": "2*x1", "rhs": 1.0}],
    }
    problem = problem_from_envelope(envelope)
    model = emit_para(problem, {})
    assert len(model.rows) == 1
    assert model.rows[0].note.startswith("omega")


def test_emit_para_domain_mismatch():
    problem = problem_from_envelope(toy_envelope("sin", 0.1))
    small = outer_loop(UnivariateFunction("sin"), Interval(0.0, PI), 0.1)
    with pytest.raises(DomainMismatch):
        emit_para(problem, {0: small})


def test_emit_para_side_mismatch():
    problem = problem_from_envelope(toy_envelope("sin", 0.1))
    over = outer_loop(UnivariateFunction("sin"), Interval(0.0, 2 * PI), 0.1,
                      side="over")
    with pytest.raises(DomainMismatch):
        emit_para(problem, {0: over})


def test_emit_pwl_variable_and_binary_counts():
    for eps in (1.0, 0.1):
        problem = problem_from_envelope(toy_envelope("sin", eps))
        relax = pwl_relaxations(problem, eps)
        model = emit_pwl(problem, relax)
        k_total = sum(r.K for r in relax.values())
        binaries = sum(r.K - 1 for r in relax.values())
        assert len(model.variables) - problem.n == 2 * k_total - 1 * len(relax)
        assert model.n_binary() == binaries
        assert model.epsilon == pytest.approx(eps)


def test_emit_pwl_single_piece_block_shape():
    envelope = toy_envelope("sin", 1.0)
    envelope["variables"][0]["ub"] = 0.6  # short domain: one piece at eps/2
    problem = problem_from_envelope(envelope)
    relax = pwl_relaxations(problem, 1.0)
    assert relax[0].K == 1
    model = emit_pwl(problem, relax)
    added = [v for v in model.variables[problem.n:]]
    assert len(added) == 1 and not added[0].integer  # one delta, zero binaries
    block_rows = [r for r in model.rows if r.note.startswith("pwl")]
    senses = sorted(r.sense for r in block_rows)
    # x-link equality, interpolation inequality, two delta edge rows
    assert senses == ["EQ", "GE", "LE", "LE"]


def test_emit_pwl_delta_pattern_matches_interpolation(rng):
    envelope = toy_envelope("sin", 0.4)
    problem = problem_from_envelope(envelope)
    relax = pwl_relaxations(problem, 0.4)
    pwl = relax[0]
    model = emit_pwl(problem, relax)
    xlink = next(r for r in model.rows if "x-link" in r.note)
    wrow = next(r for r in model.rows if "w<=" in r.note)
    deltas = sorted((n for n in xlink.lin if n.startswith("_pwl")),
                    key=lambda n: int(n.rsplit("d", 1)[1]))
    widths = [-xlink.lin[n] for n in deltas]
    for _ in range(50):
        # canonical fill (1, ..., 1, theta, 0, ..., 0)
        r = int(rng.integers(0, len(deltas)))
        theta = float(rng.uniform(0.0, 1.0))
        fill = [1.0] * r + [theta] + [0.0] * (len(deltas) - r - 1)
        x = xlink.rhs + sum(d * w for d, w in zip(fill, widths))
        w_value = -wrow.rhs + sum(
            wrow.lin[name] * d for name, d in zip(deltas, fill))
        assert w_value == pytest.approx(interpolate(pwl, x), abs=1e-10)


def test_emit_pwl_equality_pair_shares_one_block():
    envelope = {
        "variables": [{"name": "x1", "lb": 0.25, "ub": 2.0},
                      {"name": "x2", "lb": 0.25, "ub": 2.0}],
        "objective": {"coeffs": {"x1": 1.0}},
        "constraints": [{"expr": "sin(x1*x2)^2 - 0.5", "rhs": 0.0}],
    }
    problem = problem_from_envelope(envelope)
    assert len(problem.univariate) == 2  # the equality pair
    relax = pwl_relaxations(problem, 0.2)
    assert relax[0] is relax[1]
    model = emit_pwl(problem, relax)
    K = relax[0].K
    assert len(model.variables) - problem.n == 2 * K - 1
    w_rows = [r for r in model.rows if "w<=" in r.note or "w>=" in r.note]
    assert len(w_rows) == 2
    assert {r.sense for r in w_rows} == {"LE", "GE"}


# -- serialization ------------------------------------------------------------------


def _models_for_serialization(rng):
    models = []
    for name in ("sin", "exp", "integer"):
        for eps in (1.0, 0.25):
            problem = problem_from_envelope(toy_envelope(name, eps))
            models.append(emit_para(problem, para_approximations(problem, eps)))
            models.append(emit_pwl(problem, pwl_relaxations(problem, eps)))
    return models


def test_write_read_round_trip_lp_text(rng):
    for model in _models_for_serialization(rng):
        text = write_model(model, "lp-text")
        back = read_model(text, "lp-text")
        assert back == model
        assert write_model(back, "lp-text") == text


def test_write_read_round_trip_json(rng):
    for model in _models_for_serialization(rng):
        text = write_model(model, "json")
        back = read_model(text, "json")
        assert back == model
        assert model_from_dict(model_to_dict(model)) == model


def test_write_model_deterministic():
    problem = problem_from_envelope(toy_envelope("sin", 0.1))
    a = emit_para(problem, para_approximations(problem, 0.1))
    b = emit_para(problem_from_envelope(toy_envelope("sin", 0.1)),
                  para_approximations(problem_from_envelope(toy_envelope("sin", 0.1)), 0.1))
    assert write_model(a, "lp-text") == write_model(b, "lp-text")
    assert write_model(a, "json") == write_model(b, "json")


def test_write_empty_model_is_header_only():
    text = write_model(RelaxedModel(), "lp-text")
    assert "OBJECTIVE" in text and "SUBJECT TO" in text
    assert read_model(text) == RelaxedModel()


# -- brute force --------------------------------------------------------------------


def test_brute_force_sin_toy_para():
    eps = 0.1
    problem = problem_from_envelope(toy_envelope("sin", eps))
    model = emit_para(problem, para_approximations(problem, eps))
    report = brute_force_check(model, problem, grid=10**4)
    assert report.sandwich_ok
    assert report.original_optimum == pytest.approx(-1.0, abs=0.01)
    assert -1.0 - eps - 1e-9 <= report.relaxed_optimum <= report.original_optimum


def test_brute_force_pwl_matches_para_sandwich():
    eps = 0.1
    problem = problem_from_envelope(toy_envelope("sin", eps))
    model_para = emit_para(problem, para_approximations(problem, eps))
    model_pwl = emit_pwl(problem, pwl_relaxations(problem, eps))
    rep_para = brute_force_check(model_para, problem, grid=10**4)
    rep_pwl = brute_force_check(model_pwl, problem, grid=10**4)
    assert rep_para.sandwich_ok and rep_pwl.sandwich_ok


def test_brute_force_linear_model_optima_agree():
    envelope = {
        "variables": [{"name": "x1", "lb": 0.0, "ub": 1.0},
                      {"name": "x2", "lb": 0.0, "ub": 1.0}],
        "objective": {"coeffs": {"x1": 1.0, "x2": 1.0}},
        "constraints": [{"expr": "0.5 - x1 - x2", "rhs": 0.0}],
    }
    problem = problem_from_envelope(envelope)
    model = emit_para(problem, {})
    report = brute_force_check(model, problem, grid=10**4)
    assert report.original_optimum == pytest.approx(report.relaxed_optimum, abs=1e-12)
    assert report.sandwich_ok


def test_brute_force_dimension_guard():
    envelope = {
        "variables": [{"name": f"x{i}", "lb": 0.0, "ub": 1.0} for i in range(4)],
        "objective": {"coeffs": {"x0": 1.0}},
        "constraints": [{"expr": "x0 + x1 + x2 + x3", "rhs": 3.0}],
    }
    problem = problem_from_envelope(envelope)
    model = emit_para(problem, {})
    with pytest.raises(DimensionTooLarge):
        brute_force_check(model, problem, grid=100)


def test_brute_force_integer_toy():
    eps = 0.1
    problem = problem_from_envelope(toy_envelope("integer", eps))
    model = emit_para(problem, para_approximations(problem, eps))
    report = brute_force_check(model, problem, grid=10**4)
    assert report.sandwich_ok
