"""Exception types shared across the splitsense pipeline."""


class SplitsenseError(Exception):
    """Base class for all data and contract errors raised by this package."""


# --- ENVI container -----------------------------------------------------

class MissingHeaderKey(SplitsenseError):
    def __init__(self, key: str):
        super().__init__(f"required ENVI header key missing: {key!r}")
        self.key = key


class UnsupportedInterleave(SplitsenseError):
    pass


class UnsupportedDataType(SplitsenseError):
    pass


class UnsupportedByteOrder(SplitsenseError):
    pass


class NonMonotonicWavelengths(SplitsenseError):
    pass


class WavelengthCountMismatch(SplitsenseError):
    pass


class PayloadSizeMismatch(SplitsenseError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"payload size mismatch: expected {expected} bytes, got {actual}")
        self.expected = expected
        self.actual = actual


# --- preprocessing ------------------------------------------------------

class DimensionMismatch(SplitsenseError):
    pass


class WavelengthOutOfRange(SplitsenseError):
    pass


class EmptyBox(SplitsenseError):
    pass


class InsufficientBands(SplitsenseError):
    pass


# --- band analysis ------------------------------------------------------

class PatchOutOfBounds(SplitsenseError):
    pass


class GridMismatch(SplitsenseError):
    pass


class WidthTooLarge(SplitsenseError):
    pass


# --- model / training ---------------------------------------------------

class ShapeMismatch(SplitsenseError):
    pass


class NoNormals(SplitsenseError):
    pass


class NonFiniteLoss(SplitsenseError):
    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


class CorruptCheckpoint(SplitsenseError):
    pass


class ConfigError(SplitsenseError):
    pass


# --- detection ----------------------------------------------------------

class OneClassOnly(SplitsenseError):
    pass


class EmptyMask(SplitsenseError):
    pass
