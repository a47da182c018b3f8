"""Exception types shared across the codec, network, and training layers."""


class ShapeMismatchError(ValueError):
    """Operands have incompatible shapes. The message carries both shapes."""


class NumericalError(ArithmeticError):
    """An operation produced a non-finite (NaN/Inf) value."""


class WeightFileError(Exception):
    """Base class for weight-file problems."""


class BadMagicError(WeightFileError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(WeightFileError):
    """Weight file declares an unsupported format version."""


class TruncatedFileError(WeightFileError):
    """Weight file ended before all declared data was read."""


class WeightShapeError(WeightFileError):
    """Stored weights do not match the target graph's layer shapes."""


class CorruptStreamError(Exception):
    """Bitstream cannot be parsed (bad header, malformed prefix, short data)."""


class MissingModelError(Exception):
    """A model (filter bank or predictor) is required but was not supplied."""


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite."""


class ImageFormatError(Exception):
    """Raw image/video file is malformed or shorter than declared."""
