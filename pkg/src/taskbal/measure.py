"""How much units help each other, and how hard each one is, from validation scores."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    SCHEMA_VERSION,
    Direction,
    MeasurementMode,
    RunId,
    ValidatedTaskGraph,
    ValidationMatrix,
)

REL_EPS = 1e-9
ABS_EPS = 1e-12


class DegenerateDenominator(ArithmeticError):
    pass


class NegativePerformanceWarning(UserWarning):
    """Ratio-based measurements were fed negative performance values."""


class DifficultyApproach(enum.Enum):
    REAL = "real"
    PRECISE = "precise"
    CHAT = "chat"

    @classmethod
    def for_mode(cls, mode: MeasurementMode | str) -> "DifficultyApproach":
        mode = MeasurementMode.parse(mode)
        return {
            MeasurementMode.STANDARD: cls.REAL,
            MeasurementMode.PRECISE: cls.PRECISE,
            MeasurementMode.CHAT: cls.CHAT,
        }[mode]


@dataclass(frozen=True)
class ContributionMatrix:
    """``values[i, j]`` is the contribution of unit i to unit j."""

    units: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        n = len(self.units)
        if v.shape != (n, n):
            raise ValueError(f"contribution matrix must be {n}x{n}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("contribution matrix has non-finite entries")
        if not np.all(np.diag(v) == 1.0):
            raise ValueError("contribution matrix diagonal must be exactly 1")
        v.setflags(write=False)
        object.__setattr__(self, "units", tuple(self.units))
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return len(self.units)

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "units": list(self.units),
                "values": self.values.tolist()}

    @classmethod
    def from_json(cls, data) -> "ContributionMatrix":
        return cls(tuple(data["units"]), np.asarray(data["values"], dtype=float))

    def to_table(self, precision: int = 4) -> str:
        """Aligned text heatmap: rows contribute, columns receive."""
        header = ["from \\ to"] + list(self.units)
        rows = [[u] + [f"{x:.{precision}f}" for x in row] for u, row in zip(self.units, self.values)]
        return _format_table(header, rows)


@dataclass(frozen=True)
class DifficultyVector:
    units: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if v.size != len(self.units):
            raise ValueError("difficulty vector length does not match units")
        if not np.all(np.isfinite(v)):
            raise ValueError("difficulty vector has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "units", tuple(self.units))
        object.__setattr__(self, "values", v)

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "units": list(self.units),
                "values": self.values.tolist()}

    @classmethod
    def from_json(cls, data) -> "DifficultyVector":
        return cls(tuple(data["units"]), np.asarray(data["values"], dtype=float))

    def to_table(self, precision: int = 4, width: int = 30) -> str:
        """Aligned text histogram, one bar per unit scaled to the max |D|."""
        scale = max(float(np.max(np.abs(self.values))), 1e-300)
        rows = []
        for u, d in zip(self.units, self.values):
            bar = "#" * int(round(width * abs(d) / scale))
            rows.append([u, f"{d:.{precision}f}", ("-" if d < 0 else "") + bar])
        return _format_table(["unit", "difficulty", ""], rows)


def aggregate_performance(matrix: ValidationMatrix, graph: ValidatedTaskGraph,
                          run: RunId, unit: str) -> float:
    """Scalar higher-is-better performance of a unit under one run.

    Lower-is-better metrics are negated, metrics are averaged per task and
    tasks are averaged per unit.  A task's ``primary_metric``, when set,
    replaces its metric average.
    """
    per_task = []
    for task_id in graph.members[unit]:
        task = graph.task(task_id)
        metrics = task.metrics
        if task.primary_metric is not None:
            metrics = (task.metric(task.primary_metric),)
        vals = []
        for m in metrics:
            v = matrix.get(run, task_id, m.name)
            vals.append(-v if m.direction is Direction.LOWER else v)
        per_task.append(math.fsum(vals) / len(vals))
    return math.fsum(per_task) / len(per_task)


def _threshold(reference: float, rel_eps: float, abs_eps: float) -> float:
    return rel_eps * abs(reference) + abs_eps


def _contribution_runs(mode: MeasurementMode, i: str, j: str):
    """(numerator run, reference run, denominator run) for C[i -> j]."""
    if mode is MeasurementMode.CHAT:
        return RunId.only(i), RunId.base(), RunId.only(j)
    return RunId.plus_mini(i), RunId.mini(), RunId.plus_mini(j)


def contribution(matrix: ValidationMatrix, graph: ValidatedTaskGraph, i: str, j: str,
                 mode: MeasurementMode | str = MeasurementMode.STANDARD, *,
                 fallback_zero: bool = False, rel_eps: float = REL_EPS,
                 abs_eps: float = ABS_EPS) -> float:
    """Normalized gain on unit j from training on unit i.

    The gain over the reference run is divided by the gain unit j gets from
    its own data.  ``i == j`` returns exactly 1.
    """
    if i == j:
        return 1.0
    mode = MeasurementMode.parse(mode)
    run_i, run_ref, run_j = _contribution_runs(mode, i, j)
    v_i = aggregate_performance(matrix, graph, run_i, j)
    v_ref = aggregate_performance(matrix, graph, run_ref, j)
    v_j = aggregate_performance(matrix, graph, run_j, j)
    den = v_j - v_ref
    if abs(den) < _threshold(v_j, rel_eps, abs_eps):
        if fallback_zero:
            return 0.0
        raise DegenerateDenominator(
            f"contribution {i}->{j}: own-data gain {den!r} is degenerate ({run_j} vs {run_ref})")
    return (v_i - v_ref) / den


def contribution_matrix(matrix: ValidationMatrix, graph: ValidatedTaskGraph,
                        mode: MeasurementMode | str = MeasurementMode.STANDARD,
                        **kwargs) -> ContributionMatrix:
    units = graph.units
    n = len(units)
    out = np.eye(n)
    for a, i in enumerate(units):
        for b, j in enumerate(units):
            if a == b:
                continue
            try:
                out[a, b] = contribution(matrix, graph, i, j, mode, **kwargs)
            except DegenerateDenominator as exc:
                err = DegenerateDenominator(f"pair ({i} -> {j}): {exc}")
                err.pair = (i, j)
                raise err from exc
            except KeyError as exc:
                exc.pair = (i, j)
                raise
    return ContributionMatrix(units, out)


def _difficulty_runs(approach: DifficultyApproach, i: str):
    """(small-data run, full-data run) for D[i]."""
    if approach is DifficultyApproach.REAL:
        return RunId.mini(), RunId.plus_mini(i)
    if approach is DifficultyApproach.PRECISE:
        # The only full-data run on unit i in the precise plan.
        return RunId.mini_of(i), RunId.plus_mini(i)
    return RunId.mini_of(i), RunId.only(i)


def difficulty(matrix: ValidationMatrix, graph: ValidatedTaskGraph, i: str,
               approach: DifficultyApproach | str = DifficultyApproach.REAL, *,
               rel_eps: float = REL_EPS, abs_eps: float = ABS_EPS) -> float:
    """One minus the ratio of small-data to full-data performance on unit i."""
    approach = DifficultyApproach(approach)
    run_small, run_full = _difficulty_runs(approach, i)
    v_small = aggregate_performance(matrix, graph, run_small, i)
    v_full = aggregate_performance(matrix, graph, run_full, i)
    if abs(v_full) < abs_eps + rel_eps * abs(v_small):
        raise DegenerateDenominator(f"difficulty of {i}: full-data performance {v_full!r} is ~0")
    if v_small < 0 or v_full < 0:
        warnings.warn(
            f"difficulty of {i} uses negative performance ({v_small!r}, {v_full!r}); "
            "ratio semantics do not hold", NegativePerformanceWarning, stacklevel=2)
    return 1.0 - v_small / v_full


def difficulty_vector(matrix: ValidationMatrix, graph: ValidatedTaskGraph,
                      approach: DifficultyApproach | str = DifficultyApproach.REAL,
                      **kwargs) -> DifficultyVector:
    vals = [difficulty(matrix, graph, u, approach, **kwargs) for u in graph.units]
    return DifficultyVector(graph.units, np.array(vals))


def measure(matrix: ValidationMatrix, graph: ValidatedTaskGraph,
            mode: MeasurementMode | str = MeasurementMode.STANDARD,
            **kwargs) -> tuple[ContributionMatrix, DifficultyVector]:
    """Contribution matrix and difficulty vector for a measurement mode."""
    mode = MeasurementMode.parse(mode)
    cm = contribution_matrix(matrix, graph, mode, **kwargs)
    kwargs.pop("fallback_zero", None)
    dv = difficulty_vector(matrix, graph, DifficultyApproach.for_mode(mode), **kwargs)
    return cm, dv


def _format_table(header: list[str], rows: list[list[str]]) -> str:
    cols = list(zip(header, *rows))
    widths = [max(len(str(c)) for c in col) for col in cols]
    lines = ["  ".join(str(c).rjust(w) if k else str(c).ljust(w)
                       for k, (c, w) in enumerate(zip(r, widths)))
             for r in [header] + rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(line.rstrip() for line in lines) + "\n"

