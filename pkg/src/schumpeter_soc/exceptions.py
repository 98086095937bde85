class ConfigError(ValueError):
    """Invalid model or experiment configuration."""


class InsufficientDataError(ValueError):
    """Too few observations for a requested fit."""


class ResourceError(MemoryError):
    """A run would exceed the configured in-memory record budget."""
