"""Exception types raised across the package."""


class SpectroPitchError(Exception):
    """Base class for all package errors."""


class UnsupportedFormat(SpectroPitchError, ValueError):
    pass


class MalformedFile(SpectroPitchError, ValueError):
    pass


class InvalidSpec(SpectroPitchError, ValueError):
    pass


class ZeroPower(SpectroPitchError, ValueError):
    pass


class TooShort(SpectroPitchError, ValueError):
    pass


class BadShape(SpectroPitchError, ValueError):
    pass


class DegenerateInput(SpectroPitchError, ValueError):
    """Correlation is undefined because one input has zero variance."""


class NoVoicedFrames(SpectroPitchError, ValueError):
    pass


class MalformedModelFile(SpectroPitchError, ValueError):
    pass


class DivergedLoss(SpectroPitchError, RuntimeError):
    """Training produced a non-finite loss."""
