class GBPError(Exception):
    """Base class for library errors."""


class FormatError(GBPError):
    """Malformed or truncated input file/stream."""


class ValidationError(GBPError, ValueError):
    """Inputs that violate a documented precondition."""
