"""
Exception hierarchy for cascade-lab.

Every error carries the exit code the command line returns for it.
"""


class CascadeLabError(Exception):
    """Base class for lab errors."""

    exit_code = 6


class ModelError(CascadeLabError, ValueError):
    """A model file or in-memory model violates an invariant."""

    exit_code = 1

    def __init__(self, path, message):
        self.path = path
        self.detail = message
        super().__init__(f"{path} {message}" if path else message)


class ZeroVector(CascadeLabError, ValueError):
    """All coordinates vanish; the vector has no direction."""


class InteriorRequired(CascadeLabError, ValueError):
    """The vector lies on the boundary of the cone."""


class DimensionUnsupported(CascadeLabError, ValueError):
    """The grid builder only supports dimensions 2 to 6."""


class ZeroImage(CascadeLabError):
    """An atom maps a grid direction to zero."""


class NoConvergence(CascadeLabError):
    """An iteration hit its cap."""

    def __init__(self, message, residual=None, iterations=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message} (iterations={iterations}, last residual={residual})")


class NonPositiveEigenfunction(CascadeLabError):
    """The eigenfunction vanishes somewhere on the grid."""


class NoRoot(CascadeLabError):
    """No tail exponent in the scanned bracket."""

    exit_code = 4

    DERIVATIVE_NONNEGATIVE = 'derivative_nonnegative'
    KAPPA_STAYS_BELOW = 'kappa_stays_below'

    def __init__(self, reason, trace=None):
        self.reason = reason
        self.trace = list(trace or [])
        super().__init__(f"no root: {reason}")


class WorkCapExceeded(CascadeLabError):
    """The requested tree is too large."""

    exit_code = 5


class NotCalibrated(CascadeLabError, ValueError):
    """r(m)·E[N] differs from 1."""

    exit_code = 3


class PoolTooSmall(CascadeLabError, ValueError):
    """The particle pool is below the size a tail or moment estimate needs."""

    exit_code = 7


class NonConstantBranching(CascadeLabError, ValueError):
    """Tail scans need a constant number of children."""

    exit_code = 7


class DegenerateTail(CascadeLabError):
    """The top order statistics are equal or not positive."""

    exit_code = 7


class InsufficientDirections(CascadeLabError, ValueError):
    """Too few directions for a shape comparison."""

    exit_code = 7


class InsufficientSamples(CascadeLabError, ValueError):
    """Not enough samples for the requested order statistic or k grid."""

    exit_code = 7
