"""Exception hierarchy shared by every module."""


class NcagmError(Exception):
    """Base class for library errors."""


class InvalidArgumentError(NcagmError, ValueError):
    pass


class OrderViolationError(InvalidArgumentError):
    """Raised when an interval [pi, sigma] is requested with pi not below sigma."""


class PreconditionError(NcagmError, ValueError):
    """A checker's stated hypothesis does not hold on the given input."""

    def __init__(self, message, **measured):
        super().__init__(message)
        self.measured = measured


class NumericFailureError(NcagmError, ArithmeticError):
    pass


class ResourceLimitError(NcagmError):
    """The requested computation exceeds a configured size cap."""


class SamplerError(NcagmError):
    """A Monte Carlo sampler raised; ``replicate`` names the failing draw."""

    def __init__(self, message, replicate: int):
        super().__init__(message)
        self.replicate = replicate
