"""Exception types shared across the package."""


class SpinlabError(Exception):
    """Base class for all package errors."""


class ParameterError(SpinlabError, ValueError):
    """Invalid parameters or inputs (CLI exit status 2)."""


class BudgetError(SpinlabError):
    """A configured resource budget would be exceeded (CLI exit status 3)."""


class EmptySupportError(ParameterError):
    """A pinning leaves no configuration with positive weight."""


class NumericError(SpinlabError, ArithmeticError):
    """An iterative solver failed to reach its tolerance."""
