"""Overall relative-improvement metrics against a baseline method.

All values are fractions internally; reports render them as percent.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

from .core import SCHEMA_VERSION, Direction, TaskGraph, ValidatedTaskGraph, validate_task_graph


class ZeroBaseline(ZeroDivisionError):
    def __init__(self, task: str, metric: str):
        super().__init__(f"baseline value is zero for task={task!r} metric={metric!r}")
        self.task = task
        self.metric = metric


@dataclass(frozen=True)
class MethodResults:
    method: str
    values: Mapping[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (task, metric), v in dict(self.values).items():
            v = float(v)
            if not math.isfinite(v):
                raise ValueError(f"{self.method}: non-finite value for {task}/{metric}")
            clean[(str(task), str(metric))] = v
        object.__setattr__(self, "values", MappingProxyType(clean))

    def get(self, task: str, metric: str) -> float:
        try:
            return self.values[(task, metric)]
        except KeyError:
            raise KeyError(f"{self.method}: no result for task={task!r} metric={metric!r}") from None

    def check_covers(self, graph: ValidatedTaskGraph) -> None:
        """Raise unless the results cover exactly the graph's (task, metric) pairs."""
        expected = {(t.id, m.name) for t in graph.tasks for m in t.metrics}
        have = set(self.values)
        if have != expected:
            missing = sorted(expected - have)
            extra = sorted(have - expected)
            raise ValueError(f"{self.method}: results do not match task graph "
                             f"(missing={missing}, unexpected={extra})")


def _as_validated(graph) -> ValidatedTaskGraph:
    if isinstance(graph, ValidatedTaskGraph):
        return graph
    return validate_task_graph(graph, min_units=1)


def per_task_improvement(evaluated: MethodResults, baseline: MethodResults,
                         task, graph=None) -> float:
    """Direction-corrected relative change averaged over a task's metrics.

    ``task`` is a TaskSpec, or a task id together with ``graph``.
    """
    if isinstance(task, str):
        task = _as_validated(graph).task(task)
    total = 0.0
    for m in task.metrics:
        b = baseline.get(task.id, m.name)
        if b == 0:
            raise ZeroBaseline(task.id, m.name)
        rel = (evaluated.get(task.id, m.name) - b) / b
        total += -rel if m.direction is Direction.LOWER else rel
    return total / len(task.metrics)


def improvements(evaluated, baseline, graph) -> dict[str, float]:
    graph = _as_validated(graph)
    return {t.id: per_task_improvement(evaluated, baseline, t) for t in graph.tasks}


def delta_I(evaluated: MethodResults, baseline: MethodResults, graph) -> float:
    imp = improvements(evaluated, baseline, graph)
    return math.fsum(imp.values()) / len(imp)


def delta_E(evaluated: MethodResults, baseline: MethodResults, graph) -> float:
    imp = improvements(evaluated, baseline, graph)
    return math.fsum(max(0.0, -v) for v in imp.values()) / len(imp)


def delta_I_zero(evaluated: MethodResults, reference_ew: MethodResults, zero_shot_graph) -> float:
    """Average improvement on held-out tasks relative to the equal-weighting reference."""
    return delta_I(evaluated, reference_ew, zero_shot_graph)


def read_results_csv(path) -> dict[str, MethodResults]:
    """Read ``method,task,metric,value`` rows; ``#`` lines are comments."""
    by_method: dict[str, dict] = {}
    with open(path, newline="") as fh:
        rows = csv.DictReader(line for line in fh if not line.lstrip().startswith("#"))
        required = {"method", "task", "metric", "value"}
        if rows.fieldnames is None or not required <= set(rows.fieldnames):
            raise ValueError(f"{path}: expected columns {sorted(required)}, got {rows.fieldnames}")
        for row in rows:
            key = (row["task"].strip(), row["metric"].strip())
            bucket = by_method.setdefault(row["method"].strip(), {})
            if key in bucket:
                raise ValueError(f"{path}: duplicate row for {row['method']}/{key}")
            bucket[key] = float(row["value"])
    return {m: MethodResults(m, v) for m, v in by_method.items()}


def comparison_report(results: Mapping[str, MethodResults], baseline: str,
                      graph: TaskGraph | ValidatedTaskGraph, zero_shot: bool = False) -> dict:
    """Overall columns for every non-baseline method.

    With ``zero_shot`` the single column is the held-out improvement against
    ``baseline`` (the equal-weighting reference), which is itself reported as 0.
    """
    graph = _as_validated(graph)
    if baseline not in results:
        raise KeyError(f"baseline {baseline!r} not among methods {sorted(results)}")
    base = results[baseline]
    base.check_covers(graph)
    rows = []
    for name, res in results.items():
        if name == baseline and not zero_shot:
            continue
        res.check_covers(graph)
        imp = improvements(res, base, graph)
        row = {"method": name, "per_task": imp}
        if zero_shot:
            row["delta_I_zero"] = delta_I_zero(res, base, graph)
        else:
            row["delta_I"] = delta_I(res, base, graph)
            row["delta_E"] = delta_E(res, base, graph)
        rows.append(row)
    return {"schema_version": SCHEMA_VERSION, "baseline": baseline, "zero_shot": zero_shot,
            "tasks": [t.id for t in graph.tasks], "methods": rows}


def format_report(report: Mapping) -> str:
    if report["zero_shot"]:
        header = ["method", "dI_zero%"]
        keys = ["delta_I_zero"]
    else:
        header = ["method", "dI%", "dE%"]
        keys = ["delta_I", "delta_E"]
    rows = [[r["method"]] + [f"{100 * r[k]:.2f}" for k in keys] for r in report["methods"]]
    widths = [max(len(x) for x in col) for col in zip(header, *rows)]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
             for r in [header] + rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return f"baseline: {report['baseline']}\n" + "\n".join(lines) + "\n"
