"""Exception hierarchy shared across the package."""


class FransonError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(FransonError, ValueError):
    """A physical or numerical parameter is out of its allowed range."""


class RegimeError(FransonError):
    """The requested operation is not valid in the configured physical regime."""


class UnsortedStreamError(FransonError, ValueError):
    """A time-tag stream is not sorted in non-decreasing order."""


class ConfigError(FransonError, ValueError):
    """An experiment configuration is malformed; ``field`` names the culprit."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class ConfigMismatchError(FransonError):
    """Two artifacts were produced from different configurations."""
