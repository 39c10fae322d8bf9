"""Exception hierarchy shared by every module of the package."""


class BudgetedSVCError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(BudgetedSVCError, ValueError):
    """An argument violates a precondition (shape, range, emptiness)."""


class InvalidStateError(BudgetedSVCError, RuntimeError):
    """The model is not in a state that allows the requested operation."""


class NumericalFailureError(BudgetedSVCError, ArithmeticError):
    """A linear solve or similar numerical routine could not complete."""


class DegeneratePointError(BudgetedSVCError, ArithmeticError):
    """The fixed-point map is undefined at the given point."""


class DegenerateClusteringError(BudgetedSVCError, ValueError):
    """A validity index is undefined for the given partition."""


class ConfigError(BudgetedSVCError, ValueError):
    """Inconsistent configuration detected before any work is done."""


class ParseError(BudgetedSVCError, ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
