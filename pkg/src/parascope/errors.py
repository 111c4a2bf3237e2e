"""Exception hierarchy shared across the package."""


class ParascopeError(Exception):
    """Base class for all package errors."""


class NotFound(ParascopeError):
    """A requested file or record does not exist."""


class FormatError(ParascopeError):
    """On-disk data does not match its declared schema."""


class IoError(ParascopeError):
    """An I/O operation failed; no partial state was committed."""


class RangeError(ParascopeError):
    """An index or coordinate lies outside its valid range."""


class ShapeError(ParascopeError):
    """Array shapes are incompatible."""


class ConfigError(ParascopeError):
    """A configuration value is invalid or inconsistent."""


class NumericalError(ParascopeError):
    """A numeric computation produced non-finite values."""


class TrainingDiverged(ParascopeError):
    """Optimization hit a non-finite loss.

    Carries the optimization step at which divergence was detected.
    """

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"training diverged at step {step}")


class StateError(ParascopeError):
    """An operation was issued against a session in the wrong state."""


class ValidationError(ParascopeError):
    """User-supplied input failed validation.

    ``fields`` maps field names to human-readable messages.
    """

    def __init__(self, fields: dict[str, str]):
        self.fields = dict(fields)
        detail = "; ".join(f"{k}: {v}" for k, v in self.fields.items())
        super().__init__(detail or "validation failed")
