"""Experiment harness: configuration, comparison runs, plots and the CLI."""

from .config import (
    AlgorithmSpec,
    ConfigError,
    DataSpec,
    ExperimentConfig,
    default_config,
    load_config,
    parse_config,
    serialize_config,
)
from .experiment import ComparisonReport, run_experiment
from .plot import AxesSpec, PlotSeries, emit_plot

__all__ = [
    "AlgorithmSpec",
    "AxesSpec",
    "ComparisonReport",
    "ConfigError",
    "DataSpec",
    "ExperimentConfig",
    "PlotSeries",
    "default_config",
    "emit_plot",
    "load_config",
    "parse_config",
    "run_experiment",
    "serialize_config",
]
