"""Exception hierarchy shared by every stage of the pipeline."""


class GaImputeError(Exception):
    """Base class for all package errors."""


class ConfigError(GaImputeError):
    """Bad configuration: unknown keys, invalid values, stale artifact mixes."""


class SchemaError(GaImputeError):
    """Schema definition or header/schema mismatch."""


class DataError(GaImputeError):
    """Input data violates a precondition (range, shape, missingness)."""


class NumericalError(GaImputeError):
    """Non-finite values or an unsolvable linear system during fitting."""

    def __init__(self, message, cycle=None):
        super().__init__(message)
        self.cycle = cycle


class ModelFormatError(DataError):
    """Serialized artifact with the wrong version, kind or checksum."""
