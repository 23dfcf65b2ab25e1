"""Exception types shared across the package."""


class BellfitError(Exception):
    """Base class for all package errors."""


class DatasetError(BellfitError, ValueError):
    """Malformed or invalid coincidence data."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class PreconditionError(BellfitError, ValueError):
    """An operation was called on input it is not defined for."""


class DomainError(BellfitError, ValueError):
    """A parameter lies outside the domain of a formula."""


class FitError(BellfitError, ArithmeticError):
    """The least-squares problem could not be solved."""


class NumericError(BellfitError, ArithmeticError):
    """A numerical method failed to reach its tolerance."""
