"""Exception types shared across the toolkit."""


class AerflowError(Exception):
    """Base class for all aerflow errors."""


class RangeError(AerflowError, ValueError):
    """A coordinate or field is outside its representable range."""


class ParameterError(AerflowError, ValueError):
    """An argument violates a precondition (zero rate, bad kernel, ...)."""


class OrderingError(AerflowError, ValueError):
    """Timestamps are not non-decreasing where the contract requires it."""


class FormatError(AerflowError, ValueError):
    """A byte stream does not conform to the expected layout."""


class VersionError(FormatError):
    """Recognized container, unsupported version."""


class TruncationError(FormatError):
    """A byte stream ends in the middle of a record.

    `offset` is the byte offset at which the partial record starts.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(message)
        self.offset = offset


class ParseError(AerflowError, ValueError):
    """A text record is malformed. `column` is the 0-based field index."""

    def __init__(self, message: str, column: int):
        super().__init__(message)
        self.column = column


class StateError(AerflowError, RuntimeError):
    """An operation was attempted on a handle in the wrong lifecycle state."""


class StageError(AerflowError, RuntimeError):
    """A pipeline stage raised; carries the stage index and the cause."""

    def __init__(self, stage_index: int, cause: BaseException):
        super().__init__(f"stage {stage_index} failed: {cause!r}")
        self.stage_index = stage_index
        self.cause = cause


class AggregationError(AerflowError, ValueError):
    """Benchmark records are incomplete. `missing` lists the absent cells."""

    def __init__(self, message: str, missing: list):
        super().__init__(message)
        self.missing = missing


class ChecksumMismatchError(AerflowError, RuntimeError):
    """A benchmark run produced a checksum different from the oracle."""
