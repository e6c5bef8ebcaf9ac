"""Trust-region Bayesian optimization of noisy functions with adaptive replication."""

from .errors import ConfigError, DataError, NumericalError
from .gp import DesignSet, GPModel, KernelSpec, NoiseModel, fit_hyperparameters

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "DesignSet",
    "GPModel",
    "KernelSpec",
    "NoiseModel",
    "NumericalError",
    "fit_hyperparameters",
]
