"""Exception types raised by dexterlab."""

from typing import Any, Optional


class DexterlabError(Exception):
    """Base class for all dexterlab errors."""


class InitFailure(DexterlabError):
    """Initial-state rejection sampling ran out of attempts."""


class ConfigError(DexterlabError):
    """A config file could not be parsed or failed validation."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class CheckpointError(DexterlabError):
    """A checkpoint is corrupt, truncated, or does not match the model."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class NumericalInstabilityError(DexterlabError):
    """NaN or Inf showed up in a loss, a gradient, or a parameter."""

    def __init__(self, message: str, diagnostics: Optional[dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class RunLockedError(DexterlabError):
    """Another process already owns the run directory."""
