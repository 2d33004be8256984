"""Exception types shared across the package."""


class FuncMeanError(Exception):
    """Base class for every error raised by funcmean."""


class ParameterError(FuncMeanError, ValueError):
    """An argument is outside its admissible range."""


class ConvergenceError(FuncMeanError):
    """Quadrature did not reach the requested tolerance.

    The best estimate obtained so far is kept on the exception.
    """

    def __init__(self, message, best_estimate=float("nan"), est_error=float("inf")):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.est_error = est_error


class ParseError(FuncMeanError, ValueError):
    """Malformed expression source; ``offset`` is the byte offset of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class DomainError(FuncMeanError, ArithmeticError):
    """An expression was evaluated outside the domain of one of its functions."""


class ArityError(FuncMeanError, TypeError):
    """Wrong number of arguments passed to an expression."""


class UnsupportedQuery(FuncMeanError):
    """The requested (space, functional) combination has no defined answer."""


class DivergentMean(FuncMeanError):
    """The mean value does not exist (non-integrable integrand)."""


class NonConcentrating(FuncMeanError):
    """The exchange formula is invalid because the functional keeps a spread."""


class IllPosedConstraint(FuncMeanError):
    """Constraint data for a codimension-2 space are inconsistent."""


class BudgetError(FuncMeanError):
    """A grid evaluation would exceed the work budget."""
