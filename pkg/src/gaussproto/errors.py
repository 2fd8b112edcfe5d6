"""Exception types shared across the package."""


class GaussProtoError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatchError(GaussProtoError):
    """Operand shapes are incompatible for the requested operation."""


class NonScalarOutputError(GaussProtoError):
    """backward() was called on a tensor that is not a scalar."""


class NotPositiveDefiniteError(GaussProtoError):
    """A matrix required to be positive definite has a pivot <= 0."""


class NotFiniteError(GaussProtoError):
    """A public operation produced NaN or Inf values."""


class EmptyBatchError(GaussProtoError):
    """An operation that needs at least one sample received none."""


class SizeNotDivisibleError(GaussProtoError):
    """Image size is not divisible by the encoder's total stride."""


class MTooLargeError(GaussProtoError):
    """More superpixels requested than there are pixels."""


class DegenerateBoxError(GaussProtoError):
    """A region box has zero width or height after clamping."""


class MissingClassError(GaussProtoError):
    """The training data does not cover every class label."""


class NonFiniteLossError(GaussProtoError):
    """Training aborted because a loss term became NaN or Inf."""


class VersionMismatchError(GaussProtoError):
    """Checkpoint file was written by an unsupported format version."""


class CorruptFileError(GaussProtoError):
    """Checkpoint file failed its checksum or is truncated."""


class ConfigError(GaussProtoError):
    """Run configuration is invalid (unknown keys, bad values)."""


class DatasetError(GaussProtoError):
    """Dataset layout is invalid (missing files, size mismatches)."""
