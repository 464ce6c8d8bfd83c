"""Exception types shared across the package."""


class PolLinkError(Exception):
    """Base class for package errors."""


class SchemaError(PolLinkError):
    """An input file does not match its declared schema."""


class ConfigError(PolLinkError):
    """A run configuration is malformed or inconsistent."""


class EstimationError(PolLinkError):
    """A rotation or statistics estimate is degenerate."""
