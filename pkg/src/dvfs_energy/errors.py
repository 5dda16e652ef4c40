"""Exception hierarchy shared across the package."""


class DvfsEnergyError(Exception):
    """Base class for all errors raised by this package."""


class InvalidModelError(DvfsEnergyError, ValueError):
    """A parameter bundle violates its invariants."""


class DomainError(DvfsEnergyError, ValueError):
    """An evaluator was called outside its mathematical domain."""


class TraceFormatError(DvfsEnergyError, ValueError):
    """A trace or table file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FitError(DvfsEnergyError, RuntimeError):
    """Numerical failure while fitting."""


class SingularFitError(FitError):
    """The normal equations are singular (parameters not identifiable)."""


class InfeasibleFitError(FitError):
    """The fitted parameters violate a physical constraint."""


class InsufficientDataError(DvfsEnergyError, ValueError):
    """Input data do not satisfy an operation's preconditions."""
