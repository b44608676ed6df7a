"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Raster shapes or channel counts do not agree."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class FitFailure(RuntimeError):
    """Robust model fitting could not find an acceptable model."""


class FormatError(ValueError):
    """A file on disk is not in the expected raster or JSON layout."""
