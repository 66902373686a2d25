"""Experiment configuration, runner, metrics and theorem checks."""

from hears.harness.config import (ABLATION_VARIANTS, DEFAULT_SEEDS, PRESET_ENVS, PRESETS, ExperimentConfig,
                                  ScheduleSettings, ablation_grid, preset_config)
from hears.harness.experiment import ExperimentFailure, ExperimentResult, run_experiment, run_seed
from hears.harness.metrics import coefficient_of_variation, episodes_to_threshold

__all__ = [
    "ABLATION_VARIANTS", "DEFAULT_SEEDS", "PRESETS", "PRESET_ENVS", "ExperimentConfig", "ExperimentFailure",
    "ExperimentResult", "ScheduleSettings", "ablation_grid", "coefficient_of_variation", "episodes_to_threshold",
    "preset_config", "run_experiment", "run_seed",
]
