"""Exception types shared across the codec pipeline."""


class CarpError(Exception):
    """Base class for all pipeline errors."""


class ParseError(CarpError):
    """Malformed image file (bad header, truncated payload)."""


class DimensionError(CarpError):
    """Declared and actual dimensions disagree, or a shape request is invalid."""


class StreamError(CarpError):
    """Corrupt, truncated, or unsupported compressed stream."""


class NumericError(CarpError):
    """A non-finite value appeared where the model requires finite arithmetic."""


class ResourceError(CarpError):
    """An operation would exceed the configured memory budget."""
