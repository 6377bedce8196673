"""Exception hierarchy shared across the package."""


class WindcalError(Exception):
    """Base class for all package errors."""


class DomainError(WindcalError, ValueError):
    """Invalid parameter values or arguments outside a function's domain."""


class DataValidationError(WindcalError):
    """Input data failed schema or consistency checks."""


class NumericalError(WindcalError):
    """A numerical procedure failed (non-PD matrix, non-finite posterior, ...)."""
