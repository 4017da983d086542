"""Exception types shared across the package."""


class MotionweaveError(Exception):
    """Base class for package errors."""


class NoActionFound(MotionweaveError):
    """Description contains no recognizable motion verb."""


class CorpusFormatError(MotionweaveError):
    """Corpus file is malformed; carries the byte offset of the failure."""

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None
                         else f"{message} (byte offset {offset})")
        self.offset = offset


class VersionError(MotionweaveError):
    """Serialized artifact has an unsupported schema version."""


class ChecksumError(MotionweaveError):
    """Checkpoint payload does not match its recorded checksum."""


class DivergenceError(MotionweaveError):
    """Training produced a non-finite loss."""
