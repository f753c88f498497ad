"""Exception types shared across the toolkit."""


class ParcelDelinError(Exception):
    """Base class for all toolkit errors."""


class FormatError(ParcelDelinError):
    """Malformed input bytes/text: bad magic, truncated record, schema violation."""


class UnsupportedFeatureError(ParcelDelinError):
    """Well-formed input using a feature the toolkit does not handle."""


class DomainError(ParcelDelinError):
    """Input outside the mathematical/geographic domain of an operation."""


class DegenerateGeometryError(ParcelDelinError):
    """Geometry with no usable area/extent (e.g. zero-area polygon)."""


class CapacityError(ParcelDelinError):
    """A sampling budget was exhausted before the request could be satisfied."""

    def __init__(self, message, accepted=0):
        super().__init__(message)
        self.accepted = accepted


class ShapeError(ParcelDelinError):
    """Array shape mismatch between operands."""


class ConfigError(ParcelDelinError):
    """Invalid configuration value or combination."""


class DataError(ParcelDelinError):
    """Dataset inconsistency: missing required image, size mismatch, bad mask."""


class TrainingError(ParcelDelinError):
    """Training-time failure: divergence or non-finite gradients."""
