"""Batch experiments: YAML configs, the grid runner, presets and the CLI."""

from .config import METRICS, ExperimentConfig, load_config, parse_config
from .presets import describe_preset, list_presets, load_preset
from .runner import ExperimentResult, aggregate_metrics, run_experiment

__all__ = [
    "METRICS",
    "ExperimentConfig",
    "ExperimentResult",
    "aggregate_metrics",
    "describe_preset",
    "list_presets",
    "load_config",
    "load_preset",
    "parse_config",
    "run_experiment",
]
