"""Exception types shared across the package."""


class SafeTabError(Exception):
    """Base class for errors raised by safetab."""


class InvalidParameterError(SafeTabError, ValueError):
    """A numeric parameter is out of its domain (non-finite scale, MOE < 1, ...)."""


class InvalidConfigurationError(SafeTabError, ValueError):
    """A configuration is inconsistent (mixed mechanisms, bad thresholds, ...)."""


class IngestionError(SafeTabError, ValueError):
    """Input data cannot be read or does not match the configuration."""
