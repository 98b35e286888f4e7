"""Synthetic multi-task benchmark: data generator, toy model, trainer, pipeline."""

from .model import ToyModel
from .pipeline import (
    PipelineReport,
    RunPlan,
    StageError,
    cost_estimate,
    run_full_pipeline,
    run_preparation,
    uniform_measurements,
)
from .synthetic import SuiteConfig, SyntheticTaskConfig, default_suite, generate_tasks, sample_subsets
from .train import TrainConfig, TrainingSet, accuracy, train

__all__ = [
    "PipelineReport", "RunPlan", "StageError", "SuiteConfig", "SyntheticTaskConfig", "ToyModel",
    "TrainConfig", "TrainingSet", "accuracy", "cost_estimate", "default_suite", "generate_tasks",
    "run_full_pipeline", "run_preparation", "sample_subsets", "train", "uniform_measurements",
]
