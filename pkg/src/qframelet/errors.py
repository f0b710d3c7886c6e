"""Exception hierarchy shared by every module."""


class QFrameletError(Exception):
    """Base class for all package errors."""


class InputError(QFrameletError, ValueError):
    """Bad argument values or shapes."""


class ConfigError(QFrameletError, ValueError):
    """Invalid configuration key or value."""


class SchemaError(QFrameletError, ValueError):
    """A meta-path or hetero schema that cannot be resolved."""


class CapabilityError(QFrameletError, RuntimeError):
    """Requested operation is not supported at this problem size."""


class LoadError(QFrameletError, ValueError):
    """Dataset or binary file could not be read."""
