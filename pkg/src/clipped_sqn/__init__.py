"""Clipped stochastic quasi-Newton optimization for (L0, L1)-smooth problems.

Modules
-------
objectives     synthetic data and the robust-regression / logistic losses
spider         recursive variance-reduced gradient estimator
quasi_newton   adaptive damped L-BFGS and its eigenvalue bounds
optimizer      the clipped quasi-Newton driver
baselines      SGD, Spider, (L0, L1)-Spider and SdLBFGS
harness        configuration, experiment runner, plots and CLI
"""

from .objectives import Dataset, ObjectiveKind, SmoothnessParams, generate_synthetic
from .optimizer import ClippedSqnConfig, ConfigError, DivergenceError, RunTrace, run
from .quasi_newton import DampingParams, EigenBounds, LbfgsMemory, two_loop_apply
from .baselines import Algorithm, BaselineConfig, run_baseline

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "BaselineConfig",
    "ClippedSqnConfig",
    "ConfigError",
    "DampingParams",
    "Dataset",
    "DivergenceError",
    "EigenBounds",
    "LbfgsMemory",
    "ObjectiveKind",
    "RunTrace",
    "SmoothnessParams",
    "generate_synthetic",
    "run",
    "run_baseline",
    "two_loop_apply",
]
