"""Exception types raised across the package."""


class BlockBgError(Exception):
    """Base class for all package errors."""


class IngestError(BlockBgError):
    """A frame could not be found or decoded."""


class GeometryError(BlockBgError):
    """Frame geometry is inconsistent or too small for the block grid."""


class WriteError(BlockBgError):
    """An output image or report could not be written."""


class EstimationError(BlockBgError):
    """Estimation cannot proceed with the given input."""


class ConfigError(BlockBgError):
    """Invalid configuration or synthetic-sequence description."""


class SnapshotError(BlockBgError):
    """A scene-model snapshot is missing, truncated or of the wrong version."""
