"""Exception hierarchy for the toolkit.

Errors are grouped so the CLI can map them onto exit codes: ``DataError``
covers malformed or insufficient input (exit 2), everything else under
``DgaDetectError`` is a runtime failure (exit 3).
"""


class DgaDetectError(Exception):
    """Base class for all toolkit errors."""


class DataError(DgaDetectError):
    """Invalid, malformed, or insufficient input data."""


# --- domain names ---

class EmptyDomainError(DataError):
    pass


class EmptyLabelError(DataError):
    pass


class IllegalCharacterError(DataError):
    def __init__(self, raw: str, char: str, position: int):
        self.char = char
        self.position = position
        super().__init__(
            f"illegal character {char!r} (byte 0x{ord(char):02x}) "
            f"at position {position} in {raw!r}"
        )


class LabelTooLongError(DataError):
    pass


class DomainTooLongError(DataError):
    pass


class SuffixNotPresentError(DataError):
    pass


class WouldBeEmptyError(DataError):
    pass


# --- ingest ---

class UnknownFormatError(DataError):
    pass


class AllLinesRejectedError(DataError):
    pass


class BadRatiosError(DataError):
    pass


class OneClassEmptyError(DataError):
    pass


# --- models ---

class ShapeMismatchError(DgaDetectError):
    pass


class SequenceTooShortError(DataError):
    pass


class LabelOutOfRangeError(DataError):
    pass


class NoTargetMatchedError(DgaDetectError):
    pass


class AlreadyMergedError(DgaDetectError):
    pass


class BlockSizeInvalidError(DgaDetectError):
    pass


# --- evaluation / protocols ---

class EmptyTestSetError(DataError):
    pass


class EmptyMatrixError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class FamilyIneligibleError(DataError):
    pass


class HeldOutFamilyLeakedError(DgaDetectError):
    """The held-out family reached train or validation. Never a warning."""


class CheckpointIncompatibleError(DataError):
    pass


# --- probe ---

class EndpointUnreachableError(DgaDetectError):
    pass


class AllRepliesUnparseableError(DgaDetectError):
    pass
