"""Shared exception types."""


class HtscopeError(Exception):
    """Base class for all htscope errors."""


class ConfigError(HtscopeError):
    """Invalid or inconsistent configuration."""


class DataError(HtscopeError):
    """Malformed or incomplete data (e.g. missing power-table entry)."""


class DomainError(HtscopeError):
    """Argument outside the mathematical domain of an operation."""


class TrainingError(HtscopeError):
    """Detector training cannot proceed (e.g. single-class data)."""


class ConstraintError(HtscopeError):
    """No design-space configuration satisfies the given constraints."""


class CompatibilityError(HtscopeError):
    """Model / dataset version or provenance mismatch."""
