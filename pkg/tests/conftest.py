import math

import numpy as np
import pytest

from parelax.functions import Interval, UnivariateFunction


def dense_grid_max(objective, lo: float, hi: float, n: int = 10**6):
    """Brute-force maximum over a dense grid; independent of optim1d."""
    xs = np.linspace(lo, hi, n)
    ys = objective(xs)
    k = int(np.argmax(ys))
    return float(xs[k]), float(ys[k])


@pytest.fixture
def rng():
    return np.random.default_rng(20250809)


def random_function(rng) -> UnivariateFunction:
    kind = rng.choice(["sin", "cos", "exp", "ln"])
    return UnivariateFunction(str(kind))


def random_domain(rng, kind: str) -> Interval:
    if kind == "ln":
        lo = float(rng.uniform(0.1, 2.0))
        return Interval(lo, lo + float(rng.uniform(0.5, 4.0)))
    lo = float(rng.uniform(-4.0, 2.0))
    return Interval(lo, lo + float(rng.uniform(0.5, 4.0)))


def toy_envelope(name: str, eps: float) -> dict:
    """Small problem envelopes for sandwich checks.

    The y variable has objective coefficient 1 and a bound range of 3 * eps,
    so a 100-point y axis has spacing eps / 33; shifting any grid point up by
    eps lands back on the grid and the sandwich holds exactly on the grid.
    """
    pad = 1.5 * eps

    def y_var(center):
        return {"name": "y", "lb": center - pad, "ub": center + pad}

    if name == "sin":
        return {
            "variables": [{"name": "x1", "lb": 0.0, "ub": 2.0 * math.pi},
                          y_var(-1.0)],
            "objective": {"coeffs": {"y": 1.0}},
            "constraints": [{"expr": "sin(x1) - y", "rhs": 0.0}],
        }
    if name == "cos":
        return {
            "variables": [{"name": "x1", "lb": -math.pi, "ub": math.pi},
                          y_var(-1.0)],
            "objective": {"coeffs": {"y": 1.0}},
            "constraints": [{"expr": "cos(x1) - y", "rhs": 0.0},
                            {"expr": "x1", "rhs": 2.0}],
        }
    if name == "exp":
        return {
            "variables": [{"name": "x1", "lb": -2.0, "ub": 1.0},
                          y_var(math.exp(-2.0))],
            "objective": {"coeffs": {"y": 1.0}},
            "constraints": [{"expr": "exp(x1) - y", "rhs": 0.0}],
        }
    if name == "ln":
        return {
            "variables": [{"name": "x1", "lb": 0.5, "ub": 4.0},
                          y_var(math.log(0.5))],
            "objective": {"coeffs": {"y": 1.0}},
            "constraints": [{"expr": "log(x1) - y", "rhs": 0.0}],
        }
    if name == "integer":
        return {
            "variables": [{"name": "x1", "lb": 0.0, "ub": 2.0 * math.pi},
                          {"name": "y", "lb": -1.75 - pad, "ub": -1.75 + pad},
                          {"name": "z", "lb": 0.0, "ub": 3.0, "integer": True}],
            "objective": {"coeffs": {"y": 1.0, "z": 0.2 * eps}},
            "constraints": [{"expr": "sin(x1) - 0.25*z - y", "rhs": 0.0}],
        }
    raise ValueError(name)


TOY_NAMES = ("sin", "cos", "exp", "ln", "integer")
