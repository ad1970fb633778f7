"""Experiment harness: environment construction, experiment drivers,
fit/quantile helpers, artifact emission, and the command-line front end."""

from .emit import Check, Series, Summary, Table, emit
from .envs import ENV_NAMES, build_env, env_label
from .experiments import EXPERIMENTS, ExperimentSpec, run_experiment

__all__ = [
    "Check",
    "Series",
    "Summary",
    "Table",
    "emit",
    "ENV_NAMES",
    "build_env",
    "env_label",
    "EXPERIMENTS",
    "ExperimentSpec",
    "run_experiment",
]
