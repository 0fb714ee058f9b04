"""Error taxonomy shared across the package.

The CLI maps these onto exit codes: usage/config problems exit 1, data
problems exit 2, numeric failures exit 3.
"""


class EgpmError(Exception):
    """Base class for all package errors."""


class DimensionError(EgpmError):
    """Operand shapes are incompatible for the requested operation."""


class ConfigError(EgpmError):
    """Invalid configuration value or unknown configuration key."""


class DataError(EgpmError):
    """Malformed dataset, checkpoint, or rollout artifact."""


class SchemaError(EgpmError):
    """Action schema of an input does not match the configured schema."""


class NumericError(EgpmError):
    """Non-finite value encountered where a finite one is required."""
