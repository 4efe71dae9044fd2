"""Exception hierarchy shared by all solver and model modules."""


class ItuMatchError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ItuMatchError, ValueError):
    """A spec, market or sample is malformed (bad field, wrong shape, ...).

    ``field`` names the offending input when known, so front ends can emit
    machine-readable error reports.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class DomainError(ItuMatchError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class InitializationError(ItuMatchError, RuntimeError):
    """A solver could not construct an admissible starting point."""


class ConvergenceError(ItuMatchError, RuntimeError):
    """An iterative solver exhausted its budget before reaching tolerance.

    ``residual`` carries the last residual norm, ``history`` the residual
    trace when the solver records one.
    """

    def __init__(self, message: str, residual: float | None = None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = list(history) if history is not None else None


class OptimizationError(ItuMatchError, RuntimeError):
    """A likelihood optimizer failed (line search breakdown, max iterations)."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class NumericalError(ItuMatchError, RuntimeError):
    """A linear-algebra step broke down (singular or ill-conditioned system)."""
