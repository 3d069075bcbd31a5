"""Exception types shared across the toolkit.

All are ValueError subclasses so callers that don't care about the
distinction can catch one base class.
"""


class ConvkitError(ValueError):
    """Base class for all toolkit errors."""


class ShapeError(ConvkitError):
    """Array rank or extent does not match what the operation requires."""


class GeometryError(ConvkitError):
    """Layer geometry is invalid (non-integral output dims, kernel too large, ...)."""


class DomainError(ConvkitError):
    """Input values are outside the mathematical domain of the operation."""


class UnsupportedError(ConvkitError):
    """Requested configuration is deliberately not implemented."""


class ParseError(ConvkitError):
    """A byte stream (IDX, PGM, model file) is malformed."""


class TruncationError(ParseError):
    """A byte stream ended before the section being read was complete."""


class ConfigError(ConvkitError):
    """A run-configuration file is missing keys or has invalid values."""
