"""Exception hierarchy shared by every module.

Bad input raises a ``ValidationError`` (also a ``ValueError``); the CLI maps
the families onto exit codes.
"""


class EdgeIdleError(Exception):
    """Base class for all errors raised by edgeidle."""


class ValidationError(EdgeIdleError, ValueError):
    """Input data or configuration failed validation."""


class ConfigError(ValidationError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class RecordFormatError(ValidationError):
    def __init__(self, line: int, message: str, source: str = "<stream>"):
        self.line = line
        self.source = source
        super().__init__(f"{source}:{line}: {message}")


class RangeError(RecordFormatError):
    """A parsed value is outside its declared range."""


class SchemaVersionError(ValidationError):
    def __init__(self, schema: str, expected: int, found):
        self.schema = schema
        self.expected = expected
        self.found = found
        super().__init__(f"{schema}: expected schema version {expected}, found {found!r}")


class StreamOrderError(ValidationError):
    """Frames arrived out of order."""


class DuplicateObservationError(ValidationError):
    """The same (track, frame) pair was observed twice."""


class InsufficientWindowError(ValidationError):
    """A window is too short to compute features."""


class DegenerateTrainingError(ValidationError):
    """Training data cannot identify a binary model."""


class EmptyEvaluationError(ValidationError):
    """Nothing to evaluate after joining predictions and ground truth."""


class InvariantError(EdgeIdleError):
    """An internal invariant was breached; indicates a bug, not bad input."""
