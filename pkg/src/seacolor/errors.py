"""Exception hierarchy shared by every module."""


class SeacolorError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(SeacolorError, ValueError):
    pass


class DecodeError(SeacolorError):
    pass


class IoError(SeacolorError, OSError):
    pass


class EmptyMask(SeacolorError, ValueError):
    pass


class BadMagic(SeacolorError):
    pass


class VersionUnsupported(SeacolorError):
    pass


class TruncatedFile(SeacolorError):
    pass


class WavelengthOrder(SeacolorError, ValueError):
    pass


class BandOutOfRange(SeacolorError, IndexError):
    pass


class NoCubesFound(SeacolorError):
    pass


class ZeroIlluminantBand(SeacolorError, ValueError):
    """Every illuminant band fell below the division floor."""


class NegativeRange(SeacolorError, ValueError):
    pass


class NonFiniteInput(SeacolorError, ValueError):
    pass


class ImageTooSmall(SeacolorError, ValueError):
    pass


class ShapeMismatch(SeacolorError, ValueError):
    pass


class NonFiniteGradient(SeacolorError, FloatingPointError):
    """Raised when backpropagation produces NaN/Inf; carries the offending term."""

    def __init__(self, term, message=None):
        self.term = term
        super().__init__(message or f"non-finite gradient from term {term!r}")
