"""Exception types shared across the package."""


class ParelaxError(Exception):
    """Base class for all package errors."""


class DomainError(ParelaxError):
    """Function evaluated outside its validity region (e.g. log of a non-positive argument)."""


class NonFiniteObjective(ParelaxError):
    """An objective evaluation produced NaN or infinity."""


class DegenerateDenominator(ParelaxError):
    """Coefficient-bound formula evaluated too close to an interval endpoint."""


class DegenerateInterval(ParelaxError):
    """Interval too short for a well-conditioned linear solve."""


class DegenerateDomain(ParelaxError):
    """Zero-length domain where a partition is required."""


class MinimumIntervalReached(ParelaxError):
    """Outer loop shrank a candidate interval below the minimum length without success."""


class OutOfDomain(ParelaxError):
    """Evaluation point outside the approximation's domain."""


class DomainViolation(ParelaxError):
    """Interval bound propagation hit an invalid region (log/division)."""


class UnsupportedOperation(ParelaxError):
    """Expression construct the reformulation does not handle."""


class DomainMismatch(ParelaxError):
    """Approximation domain does not cover the variable's bounds."""


class DimensionTooLarge(ParelaxError):
    """Problem too large for brute-force grid enumeration."""


class ParseError(ParelaxError):
    """Malformed expression text."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position
