"""Preparation runs, weight calculation and final training on synthetic tasks."""

from __future__ import annotations

import hashlib
import json
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import kernels
from ..core import (
    GroupingMode,
    MeasurementMode,
    MetricSpec,
    RunId,
    RunKind,
    TaskGraph,
    TaskSpec,
    ValidatedTaskGraph,
    ValidationMatrix,
    required_runs,
    validate_task_graph,
    validation_matrix_to_json,
)
from ..loss import LossMode
from ..measure import ContributionMatrix, DifficultyVector, measure
from ..metrics import MethodResults, delta_E, delta_I, improvements
from ..weights import AlphaCoefficients, compute_weights
from .model import ToyModel
from .synthetic import SuiteConfig, TaskSplits, generate_tasks, sample_subsets, stable_seed
from .train import TrainConfig, TrainingSet, accuracy, steps_for, train

log = logging.getLogger(__name__)

METRIC = "accuracy"
MIN_MINI_STEPS = 100


class MiniSubsetTooSmall(ValueError):
    pass


class StageError(RuntimeError):
    """Failure inside a pipeline stage; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class RunFailed(RuntimeError):
    def __init__(self, run: RunId, cause: BaseException):
        super().__init__(f"run {run} failed: {type(cause).__name__}: {cause}")
        self.run = run
        self.cause = cause


def cost_estimate(n: int, r_large: float, r_mini: float) -> float:
    """Preparation cost as a multiple of the final training run."""
    if n < 1:
        raise ValueError("need at least one unit")
    if not (0.0 <= r_mini <= r_large <= 1.0) or r_large <= 0.0:
        raise ValueError(f"invalid sampling rates r_large={r_large}, r_mini={r_mini}")
    return r_large + n * r_mini


@dataclass(frozen=True)
class RunPlan:
    """Sampling rates and optimization budget shared by every run.

    Budgets are in passes over each run's own training data, so the cost
    of a run scales with how much data it uses.
    """

    r_large: float = 1.0
    r_mini: float = 0.0625
    epochs: float = 8.0
    batch_size: int = 16
    lr: float = 0.1
    seed: int = 0
    mode: MeasurementMode = MeasurementMode.STANDARD
    mini_floor: int = 50
    grouping: GroupingMode = GroupingMode.PER_TASK

    def __post_init__(self):
        if not (0.0 < self.r_mini <= self.r_large <= 1.0):
            raise ValueError(f"need 0 < r_mini <= r_large <= 1, got {self.r_mini}, {self.r_large}")
        if self.epochs <= 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs, batch_size and lr must be positive")
        object.__setattr__(self, "mode", MeasurementMode.parse(self.mode))
        object.__setattr__(self, "grouping", GroupingMode(self.grouping))

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, lr=self.lr)

    def to_json(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["grouping"] = self.grouping.value
        return d

    @classmethod
    def from_json(cls, data) -> "RunPlan":
        return cls(**data)


def suite_graph(suite: SuiteConfig, splits: dict[str, TaskSplits],
                grouping: GroupingMode = GroupingMode.PER_TASK) -> ValidatedTaskGraph:
    tasks = tuple(TaskSpec(t.id, (MetricSpec(METRIC),), splits[t.id].train.n_samples, t.group)
                  for t in suite.tasks)
    return validate_task_graph(TaskGraph(tasks, grouping))


@dataclass
class Subsets:
    large: dict[str, np.ndarray]
    mini: dict[str, np.ndarray]


def draw_subsets(splits: dict[str, TaskSplits], plan: RunPlan) -> Subsets:
    large, mini = {}, {}
    for tid, s in splits.items():
        large[tid], mini[tid] = sample_subsets(s.train.n_samples, plan.r_large, plan.r_mini,
                                               stable_seed(plan.seed, "subsets", tid))
        if mini[tid].size < max(plan.mini_floor, 1):
            raise MiniSubsetTooSmall(
                f"{tid}: mini subset has {mini[tid].size} samples, floor is {max(plan.mini_floor, 1)}")
    total_mini = sum(m.size for m in mini.values())
    if steps_for(total_mini, plan.epochs, plan.batch_size) < MIN_MINI_STEPS:
        warnings.warn(f"mini-only run trains for fewer than {MIN_MINI_STEPS} steps", stacklevel=2)
    return Subsets(large, mini)


def _run_parts(run: RunId, graph: ValidatedTaskGraph, splits, subsets: Subsets, task_ids):
    parts = []
    for tid in task_ids:
        train_split = splits[tid].train
        unit = graph.unit_of(tid)
        own = run.unit == unit
        if run.kind is RunKind.MINI_ONLY:
            sel = subsets.mini[tid]
        elif run.kind is RunKind.TASK_PLUS_MINI:
            sel = subsets.large[tid] if own else subsets.mini[tid]
        elif run.kind is RunKind.TASK_ONLY:
            sel = subsets.large[tid] if own else None
        elif run.kind is RunKind.MINI_OF_TASK:
            sel = subsets.mini[tid] if own else None
        else:
            sel = None
        if sel is not None:
            parts.append((train_split.select(sel), task_ids.index(tid), graph.unit_index(unit)))
    return parts


def init_model(suite: SuiteConfig, seed: int) -> ToyModel:
    rng = np.random.default_rng(stable_seed(seed, "init"))
    return ToyModel.init(suite.ids, [t.classes for t in suite.tasks], suite.input_dim,
                         suite.feature_dim, rng)


def _execute_run(args):
    run, suite, splits, subsets, task_graph, plan = args
    graph = validate_task_graph(task_graph)
    task_ids = list(suite.ids)
    model = init_model(suite, plan.seed)
    steps = 0
    if run.kind is not RunKind.BASE:
        data = TrainingSet.build(_run_parts(run, graph, splits, subsets, task_ids), graph.units)
        steps = steps_for(data.n_samples, plan.epochs, plan.batch_size)
        model = train(model, data, None, LossMode.EW, steps, stable_seed(plan.seed, "run", str(run)),
                      plan.train_config).model
    scores = {tid: accuracy(model, splits[tid].val, k) for k, tid in enumerate(task_ids)}
    return scores, steps


def run_preparation(plan: RunPlan, suite: SuiteConfig, splits: dict[str, TaskSplits] | None = None,
                    graph: ValidatedTaskGraph | None = None, workers: int = 1):
    """Train every required preparation run and score it on all validation splits.

    Returns ``(matrix, steps_per_run)``.
    """
    splits = splits if splits is not None else generate_tasks(suite, plan.seed)
    graph = graph or suite_graph(suite, splits, plan.grouping)
    subsets = draw_subsets(splits, plan)
    runs = required_runs(graph, plan.mode)
    # The validated graph holds mapping proxies, which do not pickle.
    jobs = [(run, suite, splits, subsets, graph.graph, plan) for run in runs]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_execute_run, j) for j in jobs]
            outcomes = []
            for run, fut in zip(runs, futures):
                try:
                    outcomes.append(fut.result())
                except Exception as exc:
                    raise RunFailed(run, exc) from exc
    else:
        outcomes = []
        for run, job in zip(runs, jobs):
            try:
                outcomes.append(_execute_run(job))
            except Exception as exc:
                raise RunFailed(run, exc) from exc
    entries = {}
    steps = {}
    for run, (scores, n_steps) in zip(runs, outcomes):
        steps[str(run)] = n_steps
        for tid, v in scores.items():
            entries[(run, tid, METRIC)] = v
    matrix = ValidationMatrix(entries)
    if matrix.missing(graph, runs):
        raise RuntimeError("validation matrix incomplete after preparation")
    return matrix, steps


@dataclass
class PipelineReport:
    seed: int
    config_hash: str
    suite: dict
    plan: dict
    units: list
    validation: dict
    contribution: dict
    difficulty: dict
    weights: dict
    test_results: dict
    metrics: dict
    cost_estimate: float
    cost_measured: float
    prep_steps: dict
    final_steps: int
    kernel_backend: str
    timings: dict = field(default_factory=dict)

    def to_json(self, include_timings: bool = False) -> dict:
        d = asdict(self)
        if not include_timings:
            d.pop("timings")
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def summary(self) -> str:
        lines = [f"seed {self.seed}  config {self.config_hash[:12]}  kernels {self.kernel_backend}",
                 f"temperature {self.weights['temperature']:.4g}  alpha {self.weights['alpha']}",
                 f"prep cost estimate {self.cost_estimate:.4f}  measured {self.cost_measured:.4f}",
                 ""]
        header = ["unit", "lambda_out", "lambda_in", "lambda_D", "lambda_int"]
        rows = []
        for u in self.units:
            rows.append([u] + [f"{self.weights[k]['weights'][u]:.4f}"
                               for k in ("out", "in", "diff", "integrated")])
        lines += _table(header, rows)
        lines.append("")
        header = ["method", "dI%", "dE%"]
        rows = [[m, f"{100 * v['delta_I']:.2f}", f"{100 * v['delta_E']:.2f}"]
                for m, v in self.metrics.items()]
        lines += _table(header, rows)
        return "\n".join(lines) + "\n"


def _table(header, rows):
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    out = ["  ".join(str(c).ljust(w) if i == 0 else str(c).rjust(w)
                     for i, (c, w) in enumerate(zip(r, widths))) for r in [header] + rows]
    out.insert(1, "  ".join("-" * w for w in widths))
    return out


FINAL_METHODS = ("EW", "TLA", "RLW", "DWA", "VisATB")


def _test_scores(model: ToyModel, splits, task_ids) -> dict[str, float]:
    return {tid: accuracy(model, splits[tid].test, k) for k, tid in enumerate(task_ids)}


def config_hash(suite: SuiteConfig, plan: RunPlan, alpha: AlphaCoefficients, T) -> str:
    blob = json.dumps({"suite": suite.to_json(), "plan": plan.to_json(),
                       "alpha": list(alpha.as_tuple()), "temperature": T},
                      sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def run_full_pipeline(suite: SuiteConfig, plan: RunPlan, alpha: AlphaCoefficients | None = None,
                      T="auto", *, methods=FINAL_METHODS, measurements=None,
                      workers: int = 1) -> PipelineReport:
    """Preparation, weight calculation, final training and test evaluation.

    ``measurements`` optionally replaces the measured (contribution,
    difficulty) pair.  Every final method trains from the same initial model
    with the same sample order; STL trains one model per task on that task
    alone.  Errors are re-raised as :class:`StageError` naming the stage.
    """
    alpha = alpha or AlphaCoefficients()
    timings = {}
    t0 = time.perf_counter()

    def stage(name, fn, *a, **kw):
        start = time.perf_counter()
        try:
            return fn(*a, **kw)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        finally:
            timings[name] = time.perf_counter() - start

    splits = stage("generate", generate_tasks, suite, plan.seed)
    graph = stage("graph", suite_graph, suite, splits, plan.grouping)
    matrix, prep_steps = stage("preparation", run_preparation, plan, suite, splits, graph, workers)
    if measurements is None:
        cm, dv = stage("measure", measure, matrix, graph, plan.mode)
    else:
        cm, dv = measurements
        if not isinstance(cm, ContributionMatrix) or not isinstance(dv, DifficultyVector):
            raise StageError("measure", TypeError("measurements must be (ContributionMatrix, DifficultyVector)"))
    sw = stage("weights", compute_weights, cm, dv, T, alpha)

    task_ids = list(suite.ids)
    units = graph.units

    def final(method: str):
        data = TrainingSet.build(
            [(splits[t].train, k, graph.unit_index(graph.unit_of(t))) for k, t in enumerate(task_ids)],
            units)
        steps = steps_for(data.n_samples, plan.epochs, plan.batch_size)
        mode = {"EW": LossMode.EW, "TLA": LossMode.TLA, "RLW": LossMode.RLW,
                "DWA": LossMode.DWA, "VisATB": LossMode.VITW}[method]
        w = sw.integrated if method == "VisATB" else None
        res = train(init_model(suite, plan.seed), data, w, mode, steps,
                    stable_seed(plan.seed, "final"), plan.train_config)
        return _test_scores(res.model, splits, task_ids), steps

    def stl():
        scores = {}
        for k, t in enumerate(task_ids):
            data = TrainingSet.build([(splits[t].train, k, 0)], (t,))
            steps = steps_for(data.n_samples, plan.epochs, plan.batch_size)
            res = train(init_model(suite, plan.seed), data, None, LossMode.EW, steps,
                        stable_seed(plan.seed, "stl", t), plan.train_config)
            scores[t] = accuracy(res.model, splits[t].test, k)
        return scores

    test_results = {"STL": stage("train:STL", stl)}
    final_steps = 0
    for m in methods:
        test_results[m], final_steps = stage(f"train:{m}", final, m)

    def evaluate():
        eval_graph = validate_task_graph(TaskGraph(graph.tasks), min_units=1)
        base = MethodResults("STL", {(t, METRIC): v for t, v in test_results["STL"].items()})
        out = {}
        for m in methods:
            res = MethodResults(m, {(t, METRIC): v for t, v in test_results[m].items()})
            out[m] = {"delta_I": delta_I(res, base, eval_graph),
                      "delta_E": delta_E(res, base, eval_graph),
                      "per_task": improvements(res, base, eval_graph)}
        return out

    metrics = stage("metrics", evaluate)
    est = cost_estimate(graph.n, plan.r_large, plan.r_mini)
    measured = sum(prep_steps.values()) / final_steps if final_steps else float("nan")
    timings["total"] = time.perf_counter() - t0

    return PipelineReport(
        seed=plan.seed,
        config_hash=config_hash(suite, plan, alpha, T if isinstance(T, str) else float(T)),
        suite=suite.to_json(),
        plan=plan.to_json(),
        units=list(units),
        validation=validation_matrix_to_json(matrix),
        contribution=cm.to_json(),
        difficulty=dv.to_json(),
        weights=sw.to_json(),
        test_results=test_results,
        metrics=metrics,
        cost_estimate=est,
        cost_measured=measured,
        prep_steps=prep_steps,
        final_steps=final_steps,
        kernel_backend=kernels.BACKEND,
        timings=timings,
    )


def uniform_measurements(units) -> tuple[ContributionMatrix, DifficultyVector]:
    """Degenerate measurements: every contribution 1, every difficulty 0."""
    n = len(units)
    return ContributionMatrix(tuple(units), np.ones((n, n))), DifficultyVector(tuple(units), np.zeros(n))


__all__ = [
    "RunPlan", "PipelineReport", "cost_estimate", "run_preparation", "run_full_pipeline",
    "draw_subsets", "suite_graph", "uniform_measurements",
]
