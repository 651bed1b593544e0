"""Exception types shared across the package."""


class XmodAlignError(Exception):
    """Base class for all package errors."""


class ZeroVectorError(XmodAlignError):
    """Normalization of a (near-)zero vector was requested."""


class DimensionMismatchError(XmodAlignError):
    """Operands have incompatible shapes."""


class NonPositiveTemperatureError(XmodAlignError):
    """Softmax temperature must be strictly positive."""


class LabelOutOfRangeError(XmodAlignError):
    """A class label falls outside [0, C)."""


class InsufficientSamplesError(XmodAlignError):
    """Not enough samples to satisfy the request."""


class InsufficientClassesError(XmodAlignError):
    """Not enough classes to satisfy the request."""


class NonFiniteGradientError(XmodAlignError):
    """A gradient contained NaN or Inf."""


class NonFiniteLossError(XmodAlignError):
    """A loss evaluation returned NaN or Inf."""


class FormatVersionMismatchError(XmodAlignError):
    """Dataset directory uses an unsupported format version."""


class ChecksumMismatchError(XmodAlignError):
    """A payload checksum does not match its manifest entry."""


class TruncatedFileError(XmodAlignError):
    """A payload file is shorter or longer than the manifest says."""


class AnchorRejectionExhaustedError(XmodAlignError):
    """Could not place enough well-separated class anchors."""
