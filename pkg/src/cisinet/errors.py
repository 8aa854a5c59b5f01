"""Exception types shared across the package.

The CLI maps these onto exit codes (config 2, data 3, numeric 4).
"""


class CisinetError(Exception):
    """Base class for all package errors."""


class ShapeError(CisinetError):
    """Operands have incompatible shapes; the message names both shapes."""


class ContractError(CisinetError):
    """A caller violated an operation's precondition."""


class ConfigError(CisinetError):
    """Invalid configuration value or experiment plan."""


class DataError(CisinetError):
    """Malformed input data (bad value, non-binary treatment, ...)."""


class SchemaError(DataError):
    """Column schema does not match the file."""


class NumericError(CisinetError):
    """A computation produced non-finite values."""


class RunError(CisinetError):
    """Too many per-seed failures for an experiment run to be trusted."""
