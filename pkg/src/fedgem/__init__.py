"""Federated generalized EM for isotropic Gaussian mixtures with an unknown
global number of clusters."""

from .core import (
    ComponentMessage,
    ConfigError,
    Dataset,
    DegenerateCentroids,
    DpParams,
    EmptyComponent,
    FedGEMError,
    LocalModel,
    NumericalError,
    PlacementFailure,
    RunConfig,
    UndefinedMetric,
    squared_distance,
    weighted_mean,
)
from .harness import run_centralized_baseline, run_fedgem, run_sensitivity_sweep

__version__ = "0.1.0"

__all__ = [
    "ComponentMessage",
    "ConfigError",
    "Dataset",
    "DegenerateCentroids",
    "DpParams",
    "EmptyComponent",
    "FedGEMError",
    "LocalModel",
    "NumericalError",
    "PlacementFailure",
    "RunConfig",
    "UndefinedMetric",
    "run_centralized_baseline",
    "run_fedgem",
    "run_sensitivity_sweep",
    "squared_distance",
    "weighted_mean",
]
