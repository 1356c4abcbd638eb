"""Exception hierarchy shared by every module."""


class SemContestError(Exception):
    """Base class for all package errors."""


class ParameterError(SemContestError, ValueError):
    """An argument lies outside the operation's domain."""


class ConfigError(ParameterError):
    """A configuration file or mapping is malformed."""


class InfeasibleError(SemContestError):
    """No candidate satisfies the problem's constraints."""


class OutageLimitError(SemContestError):
    """Outage probability requested at zero power.

    The limit value (certain outage) is carried on ``value``.
    """

    def __init__(self, message: str, value: float = 1.0):
        super().__init__(message)
        self.value = value


class IngestionError(SemContestError, ValueError):
    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class TrainingError(SemContestError, FloatingPointError):
    """Raised when an optimizer step would produce non-finite parameters."""
