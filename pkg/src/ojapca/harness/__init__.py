"""Experiment harness: configuration, Monte-Carlo runs, file formats and the CLI."""

from .config import ExperimentConfig, build_config, parse_config
from .experiment import (
    compare_online_offline,
    fit_rate,
    ingest_run,
    run_experiment,
    run_trial,
    sweep,
)
from .io import ingest_stream

__all__ = [
    "ExperimentConfig",
    "build_config",
    "compare_online_offline",
    "fit_rate",
    "ingest_run",
    "ingest_stream",
    "parse_config",
    "run_experiment",
    "run_trial",
    "sweep",
]
