"""Task weighting for multi-task instruction tuning from measured cross-task
contributions and per-task difficulties."""

__version__ = "0.1.0"

from .core import (
    Direction,
    GroupingMode,
    MeasurementMode,
    MetricSpec,
    RunId,
    RunKind,
    TaskGraph,
    TaskSpec,
    ValidationMatrix,
    WeightVector,
    required_runs,
    validate_task_graph,
)
from .loss import LossMode, TokenLossBatch, ew_loss, tla_loss, vitw_loss
from .measure import ContributionMatrix, DifficultyVector, contribution_matrix, difficulty_vector, measure
from .metrics import MethodResults, delta_E, delta_I, delta_I_zero
from .weights import AlphaCoefficients, auto_temperature, compute_weights, integrate

__all__ = [
    "AlphaCoefficients", "ContributionMatrix", "DifficultyVector", "Direction", "GroupingMode",
    "LossMode", "MeasurementMode", "MethodResults", "MetricSpec", "RunId", "RunKind", "TaskGraph",
    "TaskSpec", "TokenLossBatch", "ValidationMatrix", "WeightVector", "auto_temperature",
    "compute_weights", "contribution_matrix", "delta_E", "delta_I", "delta_I_zero",
    "difficulty_vector", "ew_loss", "integrate", "measure", "required_runs", "tla_loss",
    "validate_task_graph", "vitw_loss",
]
