"""Parabolic and piecewise-linear epsilon-relaxations of univariate constraints."""

from .functions import Interval, UnivariateFunction, constant, flip_for_overestimation, lipschitz_bound
from .optim1d import MaxResult, global_max, inner_maxima
from .para import (ABounds, Parabola, ParaApproximation, ParaPiece,
                   ViolationReport, bound_A, bound_B, initial_upper_a,
                   inner_loop, outer_loop, parabola_from_a, solve_bc,
                   lipschitz_construct, verify)
from .pwl import PwlApproximation, greedy_breakpoints, interpolate, max_error, relax_shift
from .expr import (ExpressionNode, FactoredProblem, Variable, parse,
                   problem_from_envelope, propagate_bounds, reformulate, to_string)
from .lut import LookupTable, approximate_function, lookup_or_compute, round_bounds
from .emit import (CheckReport, RelaxedModel, brute_force_check, emit_para,
                   emit_pwl, read_model, write_model)

__version__ = "0.1.0"
