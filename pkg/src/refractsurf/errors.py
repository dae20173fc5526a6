"""Exception hierarchy shared by every module of the package."""


class RefractError(Exception):
    """Base class for all errors raised by refractsurf."""


class InvalidInputError(RefractError, ValueError):
    """Non-finite, malformed or out-of-range input."""


class InvalidDepthError(InvalidInputError):
    """A depth along a ray was zero or negative."""


class BehindCameraError(RefractError, ValueError):
    """A point could not be projected because it lies at z <= 0."""


class TotalInternalReflectionError(RefractError, ArithmeticError):
    """No refracted ray exists for the given incidence."""


class OrientationError(RefractError, ValueError):
    """The normal does not face the incoming line of sight (L.n <= 0)."""


class GeometryError(RefractError):
    """A ray failed to intersect the surface or background it was aimed at."""


class DegenerateSceneError(RefractError):
    """Too many pixels of a synthesized scene are unusable."""


class ConfigError(RefractError, ValueError):
    """Bad key or value in a key-value configuration document."""


class FormatError(RefractError, ValueError):
    """A binary file does not follow the RFRC/RFDM layout."""


class DegenerateEnergyWarning(UserWarning):
    """The energy is flat in the direction being optimized (e.g. mu == 1)."""


class HeightAmbiguityWarning(UserWarning):
    """Absolute depth is not observable under orthographic projection."""
