"""Missing-data imputation: recall models searched by a real-coded genetic algorithm."""

from .dataset import DataMatrix, DatasetSchema, VariableSpec, default_schema
from .ga import GaConfig, run_ga
from .imputer import RecallBackend, impute_dataset

__all__ = [
    "DataMatrix",
    "DatasetSchema",
    "GaConfig",
    "RecallBackend",
    "VariableSpec",
    "default_schema",
    "impute_dataset",
    "run_ga",
]
__version__ = "0.1.0"
