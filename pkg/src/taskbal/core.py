"""Domain types shared across the package.

Everything here is immutable once constructed.  Graphs and validation
matrices round-trip through JSON; see ``task_graph_to_json`` and
``validation_matrix_to_json`` for the on-disk layout.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

SCHEMA_VERSION = 1


class TaskGraphError(ValueError):
    """Raised when a task graph violates its invariants."""


class DuplicateId(TaskGraphError):
    pass


class MissingEntry(KeyError):
    """A (run, task, metric) value required by a computation is absent."""

    def __init__(self, run: "RunId", task: str, metric: str):
        super().__init__(f"missing validation entry run={run} task={task!r} metric={metric!r}")
        self.run = run
        self.task = task
        self.metric = metric


class Direction(enum.Enum):
    HIGHER = "higher"
    LOWER = "lower"

    @classmethod
    def parse(cls, value: "str | Direction") -> "Direction":
        if isinstance(value, Direction):
            return value
        v = str(value).strip().lower()
        if v in ("higher", "higher_is_better", "max", "up"):
            return cls.HIGHER
        if v in ("lower", "lower_is_better", "min", "down"):
            return cls.LOWER
        raise TaskGraphError(f"unknown metric direction {value!r}")


class GroupingMode(enum.Enum):
    PER_TASK = "per_task"
    PER_GROUP = "per_group"


class MeasurementMode(enum.Enum):
    STANDARD = "standard"
    CHAT = "chat"
    PRECISE = "precise"

    @classmethod
    def parse(cls, value: "str | MeasurementMode") -> "MeasurementMode":
        if isinstance(value, MeasurementMode):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown measurement mode {value!r}") from None


@dataclass(frozen=True)
class MetricSpec:
    name: str
    direction: Direction = Direction.HIGHER

    def __post_init__(self):
        if not isinstance(self.direction, Direction):
            object.__setattr__(self, "direction", Direction.parse(self.direction))


@dataclass(frozen=True)
class TaskSpec:
    id: str
    metrics: tuple[MetricSpec, ...]
    dataset_size: int = 0
    group: str | None = None
    # When set, only this metric feeds the scalar performance of the task.
    primary_metric: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "metrics", tuple(self.metrics))
        if not self.metrics:
            raise TaskGraphError(f"task {self.id!r} has no metrics")
        if self.dataset_size < 0:
            raise TaskGraphError(f"task {self.id!r} has negative dataset_size")
        names = [m.name for m in self.metrics]
        if len(set(names)) != len(names):
            raise DuplicateId(f"task {self.id!r} repeats a metric name")
        if self.primary_metric is not None and self.primary_metric not in names:
            raise TaskGraphError(
                f"task {self.id!r}: primary metric {self.primary_metric!r} not among {names}")

    def metric(self, name: str) -> MetricSpec:
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)


@dataclass(frozen=True)
class TaskGraph:
    tasks: tuple[TaskSpec, ...]
    grouping_mode: GroupingMode = GroupingMode.PER_TASK

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if not isinstance(self.grouping_mode, GroupingMode):
            object.__setattr__(self, "grouping_mode", GroupingMode(self.grouping_mode))


@dataclass(frozen=True)
class ValidatedTaskGraph:
    """A task graph whose invariants hold, with balancing units materialized.

    ``units`` is the ordered list of balancing units: task ids in per-task
    mode, group ids (in order of first appearance) in per-group mode.
    """

    graph: TaskGraph
    units: tuple[str, ...]
    members: Mapping[str, tuple[str, ...]]

    @property
    def n(self) -> int:
        return len(self.units)

    @property
    def tasks(self) -> tuple[TaskSpec, ...]:
        return self.graph.tasks

    @property
    def grouping_mode(self) -> GroupingMode:
        return self.graph.grouping_mode

    def task(self, task_id: str) -> TaskSpec:
        for t in self.graph.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)

    def unit_of(self, task_id: str) -> str:
        for u, ts in self.members.items():
            if task_id in ts:
                return u
        raise KeyError(task_id)

    def unit_index(self, unit: str) -> int:
        return self.units.index(unit)

    def dataset_size(self, unit: str) -> int:
        return sum(self.task(t).dataset_size for t in self.members[unit])


def validate_task_graph(graph: TaskGraph, min_units: int = 2) -> ValidatedTaskGraph:
    """Check graph invariants and build the balancing-unit list.

    ``min_units`` is the number of units required for balancing; pass 1 to
    accept degenerate single-unit graphs (e.g. for planning only).
    """
    seen: set[str] = set()
    for t in graph.tasks:
        if t.id in seen:
            raise DuplicateId(f"duplicate task id {t.id!r}")
        seen.add(t.id)
        if not t.metrics:
            raise TaskGraphError(f"task {t.id!r} has no metrics")

    members: dict[str, list[str]] = {}
    if graph.grouping_mode is GroupingMode.PER_GROUP:
        for t in graph.tasks:
            if not t.group:
                raise TaskGraphError(f"task {t.id!r} has no group in per_group mode")
            members.setdefault(t.group, []).append(t.id)
    else:
        for t in graph.tasks:
            members[t.id] = [t.id]

    if len(members) < min_units:
        raise TaskGraphError(
            f"need at least {min_units} balancing units, got {len(members)}")
    frozen = MappingProxyType({u: tuple(ts) for u, ts in members.items()})
    return ValidatedTaskGraph(graph=graph, units=tuple(members), members=frozen)


class RunKind(enum.Enum):
    BASE = "base"
    MINI_ONLY = "mini"
    TASK_PLUS_MINI = "plus_mini"
    TASK_ONLY = "only"
    MINI_OF_TASK = "mini_of"


@dataclass(frozen=True)
class RunId:
    """Label of a preparation-stage training run.

    ``unit`` is set for the three per-unit kinds and None otherwise.
    """

    kind: RunKind
    unit: str | None = None

    def __post_init__(self):
        per_unit = self.kind in (RunKind.TASK_PLUS_MINI, RunKind.TASK_ONLY, RunKind.MINI_OF_TASK)
        if per_unit and not self.unit:
            raise ValueError(f"{self.kind.value} run needs a unit id")
        if not per_unit and self.unit is not None:
            raise ValueError(f"{self.kind.value} run takes no unit id")

    @classmethod
    def base(cls) -> "RunId":
        return cls(RunKind.BASE)

    @classmethod
    def mini(cls) -> "RunId":
        return cls(RunKind.MINI_ONLY)

    @classmethod
    def plus_mini(cls, unit: str) -> "RunId":
        return cls(RunKind.TASK_PLUS_MINI, unit)

    @classmethod
    def only(cls, unit: str) -> "RunId":
        return cls(RunKind.TASK_ONLY, unit)

    @classmethod
    def mini_of(cls, unit: str) -> "RunId":
        return cls(RunKind.MINI_OF_TASK, unit)

    def __str__(self) -> str:
        return self.kind.value if self.unit is None else f"{self.kind.value}:{self.unit}"

    @classmethod
    def parse(cls, text: str) -> "RunId":
        kind, _, unit = text.partition(":")
        return cls(RunKind(kind), unit or None)


def required_runs(graph: ValidatedTaskGraph, mode: MeasurementMode | str) -> list[RunId]:
    """Preparation runs needed to measure contribution and difficulty.

    The order is stable: shared runs first, then per-unit runs in unit order.
    """
    mode = MeasurementMode.parse(mode)
    units = graph.units
    if mode is MeasurementMode.STANDARD:
        return [RunId.mini()] + [RunId.plus_mini(u) for u in units]
    if mode is MeasurementMode.PRECISE:
        return ([RunId.mini()] + [RunId.plus_mini(u) for u in units]
                + [RunId.mini_of(u) for u in units])
    return ([RunId.base()] + [RunId.only(u) for u in units]
            + [RunId.mini_of(u) for u in units])


@dataclass(frozen=True)
class ValidationMatrix:
    """Raw validation performance keyed by (run, task id, metric name)."""

    entries: Mapping[tuple[RunId, str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (run, task, metric), value in dict(self.entries).items():
            if isinstance(run, str):
                run = RunId.parse(run)
            value = float(value)
            if not math.isfinite(value):
                raise ValueError(f"non-finite validation value for {run}/{task}/{metric}")
            clean[(run, task, metric)] = value
        object.__setattr__(self, "entries", MappingProxyType(clean))

    def get(self, run: RunId, task: str, metric: str) -> float:
        try:
            return self.entries[(run, task, metric)]
        except KeyError:
            raise MissingEntry(run, task, metric) from None

    def has(self, run: RunId, task: str, metric: str) -> bool:
        return (run, task, metric) in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def missing(self, graph: ValidatedTaskGraph, runs: Iterable[RunId]) -> list[tuple[RunId, str, str]]:
        """Required entries absent from the matrix, in deterministic order."""
        out = []
        for run in runs:
            for t in graph.tasks:
                for m in t.metrics:
                    if (run, t.id, m.name) not in self.entries:
                        out.append((run, t.id, m.name))
        return out

    def coverage(self, graph: ValidatedTaskGraph, runs: Iterable[RunId]) -> dict[tuple[RunId, str, str], bool]:
        return {
            (run, t.id, m.name): (run, t.id, m.name) in self.entries
            for run in runs for t in graph.tasks for m in t.metrics
        }

    def transformed(self, fn) -> "ValidationMatrix":
        """New matrix with ``fn(run, task, metric, value)`` applied to every value."""
        return ValidationMatrix({k: fn(*k, v) for k, v in self.entries.items()})


class Strategy(enum.Enum):
    OUT = "out"
    IN = "in"
    DIFF = "diff"
    INTEGRATED = "integrated"
    MANUAL = "manual"
    RLW = "rlw"
    DWA = "dwa"


@dataclass(frozen=True)
class WeightVector:
    """Positive per-unit task weights.

    ``provenance`` records how the vector was produced (temperature, alpha,
    seed, ...) and is carried into JSON exports untouched.
    """

    units: tuple[str, ...]
    values: np.ndarray
    strategy: Strategy = Strategy.MANUAL
    provenance: Mapping = field(default_factory=dict)

    def __post_init__(self):
        units = tuple(self.units)
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if len(units) != values.size:
            raise ValueError(f"{len(units)} units but {values.size} weights")
        if len(set(units)) != len(units):
            raise DuplicateId("weight vector repeats a unit id")
        # Exact zeros are tolerated: softmax underflows at extreme temperatures.
        if not np.all(np.isfinite(values)) or np.any(values < 0) or not np.any(values > 0):
            raise ValueError(f"task weights must be finite and positive, got {values}")
        values.setflags(write=False)
        object.__setattr__(self, "units", units)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "provenance", MappingProxyType(dict(self.provenance)))

    @classmethod
    def ones(cls, units, strategy=Strategy.MANUAL) -> "WeightVector":
        units = tuple(units)
        return cls(units, np.ones(len(units)), strategy)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, float], strategy=Strategy.MANUAL) -> "WeightVector":
        return cls(tuple(mapping), np.array(list(mapping.values()), dtype=float), strategy)

    def __getitem__(self, unit: str) -> float:
        return float(self.values[self.units.index(unit)])

    def __len__(self) -> int:
        return len(self.units)

    def as_dict(self) -> dict[str, float]:
        return {u: float(v) for u, v in zip(self.units, self.values)}

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "strategy": self.strategy.value,
            "weights": self.as_dict(),
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "WeightVector":
        _check_schema(data)
        return cls(tuple(data["weights"]), list(data["weights"].values()),
                   Strategy(data.get("strategy", "manual")), data.get("provenance", {}))


# -- JSON -------------------------------------------------------------------

def task_graph_to_json(graph: TaskGraph | ValidatedTaskGraph) -> dict:
    if isinstance(graph, ValidatedTaskGraph):
        graph = graph.graph
    tasks = []
    for t in graph.tasks:
        d = {
            "id": t.id,
            "group": t.group,
            "dataset_size": t.dataset_size,
            "metrics": [{"name": m.name, "direction": m.direction.value} for m in t.metrics],
        }
        if t.primary_metric is not None:
            d["primary_metric"] = t.primary_metric
        tasks.append(d)
    return {"schema_version": SCHEMA_VERSION, "grouping_mode": graph.grouping_mode.value, "tasks": tasks}


def task_graph_from_json(data: Mapping) -> TaskGraph:
    _check_schema(data)
    tasks = []
    for t in data["tasks"]:
        metrics = tuple(MetricSpec(m["name"], Direction.parse(m.get("direction", "higher")))
                        for m in t.get("metrics", []))
        tasks.append(TaskSpec(
            id=str(t["id"]),
            metrics=metrics,
            dataset_size=int(t.get("dataset_size", 0)),
            group=t.get("group"),
            primary_metric=t.get("primary_metric"),
        ))
    return TaskGraph(tuple(tasks), GroupingMode(data.get("grouping_mode", "per_task")))


def validation_matrix_to_json(matrix: ValidationMatrix) -> dict:
    rows = [
        {"run": str(run), "task": task, "metric": metric, "value": value}
        for (run, task, metric), value in sorted(matrix.entries.items(), key=lambda kv: (str(kv[0][0]), kv[0][1], kv[0][2]))
    ]
    return {"schema_version": SCHEMA_VERSION, "entries": rows}


def validation_matrix_from_json(data: Mapping) -> ValidationMatrix:
    _check_schema(data)
    entries = {}
    for row in data["entries"]:
        key = (RunId.parse(row["run"]), str(row["task"]), str(row["metric"]))
        if key in entries:
            raise ValueError(f"duplicate validation entry {key}")
        entries[key] = float(row["value"])
    return ValidationMatrix(entries)


def _check_schema(data: Mapping):
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {version}")


def load_task_graph(path) -> TaskGraph:
    with open(path) as fh:
        return task_graph_from_json(json.load(fh))


def load_validation_matrix(path) -> ValidationMatrix:
    with open(path) as fh:
        return validation_matrix_from_json(json.load(fh))


def dump_json(data, path):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, enum.Enum):
        return obj.value
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
