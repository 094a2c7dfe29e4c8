"""Exception types raised by the numerical routines."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ConvergenceError(ArithmeticError):
    """Adaptive quadrature did not reach its tolerance.

    ``best`` holds the best estimate available when the subdivision
    budget ran out.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class EstimationError(ArithmeticError):
    """An extrapolation or fit was unstable; ``diagnostics`` explains why."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NumericalError(ArithmeticError):
    """A simulation produced non-finite or collapsed state."""
