"""Exception hierarchy shared by all bearing_stager modules."""

from __future__ import annotations


class BearingStagerError(Exception):
    """Base class for every error raised by this package."""


# --- ingest -----------------------------------------------------------------


class IngestError(BearingStagerError, ValueError):
    pass


class EmptyFile(IngestError):
    pass


class MalformedRow(IngestError):
    def __init__(self, line: int, detail: str = ""):
        self.line = line
        msg = f"malformed row at line {line}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class NonFiniteSample(IngestError):
    def __init__(self, line: int):
        self.line = line
        super().__init__(f"non-finite acceleration sample at line {line}")


class NoSnapshots(IngestError):
    pass


class InconsistentLength(IngestError):
    def __init__(self, file: str, expected: int, got: int):
        self.file = file
        self.expected = expected
        self.got = got
        super().__init__(f"{file}: {got} samples, expected {expected}")


# --- numerics -----------------------------------------------------------------


class IndivisibleLength(BearingStagerError, ValueError):
    pass


class NonFiniteInput(BearingStagerError, ValueError):
    pass


class TooShort(BearingStagerError, ValueError):
    pass


class OutOfRangeN(BearingStagerError, ValueError):
    pass


class ZeroVariance(BearingStagerError, ValueError):
    pass


class ShapeMismatch(BearingStagerError, ValueError):
    pass


class LengthMismatch(BearingStagerError, ValueError):
    pass


# --- training -----------------------------------------------------------------


class TooFewSpectra(BearingStagerError, ValueError):
    pass


class DivergedLoss(BearingStagerError, RuntimeError):
    pass


class ModelNotTrained(BearingStagerError, RuntimeError):
    pass


class DegeneratePoints(BearingStagerError, ValueError):
    pass


class MissingStageWarning(UserWarning):
    """Some stage has no rows in a training set; its class weight is unused."""


# --- configuration / persistence ---------------------------------------------------


class InvalidConfig(BearingStagerError, ValueError):
    pass


class ConfigError(BearingStagerError, ValueError):
    pass


class CorruptFile(BearingStagerError, ValueError):
    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"corrupt model file ({reason}){': ' + detail if detail else ''}")


class WrongKind(BearingStagerError, ValueError):
    def __init__(self, expected: str, got: str):
        self.expected = expected
        self.got = got
        super().__init__(f"expected model kind {expected!r}, file holds {got!r}")
