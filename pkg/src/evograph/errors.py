"""Exception types shared across the package."""


class EvographError(Exception):
    """Base class for all package errors."""


class InvalidParameter(EvographError, ValueError):
    """A constructor or solver received an out-of-range argument."""


class SizeLimitError(EvographError, ValueError):
    """The requested object would exceed a configured size cap."""


class UnsupportedParameter(EvographError, ValueError):
    """The argument is valid in general but excluded by the formula used."""


class ContractViolation(EvographError, RuntimeError):
    """A precondition or postcondition of an operation failed."""


class EstimateUnavailable(EvographError, RuntimeError):
    """Every Monte Carlo trial was censored, so no point estimate exists."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
