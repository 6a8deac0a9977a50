"""Exception types shared across the package."""


class AirhandsError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(AirhandsError):
    """A value violates a structural invariant (e.g. buffer length vs dimensions)."""


class DimensionError(AirhandsError):
    """Two or more images that must share a shape do not."""


class ConfigError(AirhandsError):
    """A configuration value is out of its allowed range."""


class EncodeError(AirhandsError):
    """A message or frame cannot be encoded (e.g. oversize payload)."""


class DecodeError(AirhandsError):
    """A byte payload is not a decodable image."""


class ResourceError(AirhandsError):
    """Decoding would exceed a configured resource cap."""


class ProtocolError(AirhandsError):
    """The peer sent bytes that violate the wire protocol."""


class SourceError(AirhandsError):
    """A frame source is unreadable or corrupt."""
