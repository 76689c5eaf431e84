"""Define package errors."""
from __future__ import annotations


class FlopsError(Exception):
    """A base error."""

    pass


class DomainError(FlopsError, ValueError):
    """An error related to an argument outside an operation's domain."""

    pass


class IntegrationError(FlopsError):
    """An error related to a non-finite value produced while integrating."""

    pass


class ConfigError(FlopsError):
    """An error related to an invalid experiment configuration."""

    pass


class CellFailedError(FlopsError):
    """Define an error when a single sweep cell can't be completed."""

    pass
