"""Reproducible experiments: configuration, registry, runner and CLI."""

from .config import ConfigError, ExperimentConfig, load_config
from .registry import get_experiment, registry
from .runner import execute, run

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "get_experiment", "registry",
           "execute", "run"]
