"""Exception types shared across the package."""


class PhyloForecastError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(PhyloForecastError):
    """Input violates a documented precondition or invariant."""


class FormatError(ValidationError):
    """A product file could not be parsed.

    Carries the 1-based line number of the offending line when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TrainingError(PhyloForecastError):
    """Training aborted (non-finite loss or inconsistent state)."""
