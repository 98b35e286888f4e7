"""Minibatch gradient descent on token-level weighted objectives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import WeightVector
from ..loss import DwaState, LossMode, TokenLossBatch, dwa_weights, rlw_weights, token_coefficients
from .model import ToyModel
from .synthetic import TaskData


class TrainingDiverged(FloatingPointError):
    def __init__(self, step: int, trace: list[float]):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step
        self.trace = trace


@dataclass
class TrainingSet:
    """Tokens from several tasks, grouped into samples.

    ``task_index`` selects the model head, ``unit_index`` the balancing unit.
    """

    X: np.ndarray
    y: np.ndarray
    task_index: np.ndarray
    unit_index: np.ndarray
    offsets: np.ndarray
    units: tuple[str, ...]

    @property
    def n_samples(self) -> int:
        return len(self.offsets) - 1

    @classmethod
    def build(cls, parts, units) -> "TrainingSet":
        """``parts`` is a list of (TaskData, task_index, unit_index) triples."""
        d = next(p[0].X.shape[1] for p in parts) if parts else 0
        Xs, ys, ts, us, lens = [], [], [], [], []
        for data, t, u in parts:
            if data.n_samples == 0:
                continue
            Xs.append(data.X)
            ys.append(data.y)
            ts.append(np.full(data.n_tokens, t, dtype=np.intp))
            us.append(np.full(data.n_tokens, u, dtype=np.intp))
            lens.append(np.diff(data.offsets))
        if not Xs:
            raise ValueError("training set is empty")
        lens = np.concatenate(lens)
        offsets = np.concatenate([[0], np.cumsum(lens)]).astype(np.intp)
        return cls(np.concatenate(Xs).reshape(-1, d), np.concatenate(ys), np.concatenate(ts),
                   np.concatenate(us), offsets, tuple(units))

    def token_index(self, samples: np.ndarray) -> np.ndarray:
        starts = self.offsets[samples]
        lens = self.offsets[samples + 1] - starts
        rel = np.arange(lens.sum()) - np.repeat(np.cumsum(lens) - lens, lens)
        return np.repeat(starts, lens) + rel


@dataclass
class TrainConfig:
    batch_size: int = 16
    lr: float = 0.5
    dwa_temperature: float = 2.0


@dataclass
class TrainResult:
    model: ToyModel
    losses: list[float] = field(default_factory=list)
    steps: int = 0


def steps_for(n_samples: int, epochs: float, batch_size: int) -> int:
    return int(math.ceil(epochs * n_samples / batch_size))


def train(model: ToyModel, data: TrainingSet, weights: WeightVector | None = None,
          loss_mode: LossMode | str = LossMode.EW, steps: int = 100, seed: int = 0,
          config: TrainConfig | None = None) -> TrainResult:
    """Train a copy of ``model``; the input model is left untouched.

    Sample order is reshuffled every pass over ``data``.  RLW redraws its
    weights each step; DWA updates once per pass from the per-unit average
    training losses of the two previous passes.
    """
    config = config or TrainConfig()
    mode = LossMode(loss_mode)
    if mode is LossMode.VITW and weights is None:
        raise ValueError("VITW training needs a weight vector")
    model = model.copy()
    rng = np.random.default_rng(seed)
    units = data.units
    n_units = len(units)
    dwa = DwaState(config.dwa_temperature)
    epoch_w = None
    epoch_sums = np.zeros(n_units)
    epoch_counts = np.zeros(n_units)
    order = np.zeros(0, dtype=np.intp)
    pos = 0
    trace: list[float] = []
    B = config.batch_size

    for step in range(steps):
        if pos >= order.size:
            if mode is LossMode.DWA:
                avg = None
                if epoch_counts.sum() > 0:
                    avg = np.where(epoch_counts > 0, epoch_sums / np.maximum(epoch_counts, 1), 1.0)
                    avg = np.maximum(avg, 1e-12)
                    dwa.push(avg)
                epoch_w, _ = dwa_weights(dwa, units)
                epoch_sums[:] = 0.0
                epoch_counts[:] = 0.0
            order = rng.permutation(data.n_samples)
            pos = 0
        batch = order[pos:pos + B]
        pos += B
        idx = data.token_index(batch)
        X, y, ti, ui = data.X[idx], data.y[idx], data.task_index[idx], data.unit_index[idx]

        if mode is LossMode.RLW:
            w = rlw_weights(rng, units)
        elif mode is LossMode.DWA:
            w = epoch_w
        else:
            w = weights
        agg = LossMode.VITW if mode in (LossMode.RLW, LossMode.DWA) else mode

        # Coefficients depend only on unit membership and token counts.
        probe = TokenLossBatch(units, ui, idx, np.zeros(idx.size))
        coef = token_coefficients(probe, agg, w)
        nll, dF, dH = model.forward_backward(X, y, ti, coef)
        value = float(np.dot(coef, nll))
        trace.append(value)
        if not math.isfinite(value):
            raise TrainingDiverged(step, trace)
        if mode is LossMode.DWA:
            epoch_sums += np.bincount(ui, weights=nll, minlength=n_units)
            epoch_counts += np.bincount(ui, minlength=n_units)
        model.features -= config.lr * dF
        model.heads -= config.lr * dH

    return TrainResult(model, trace, steps)


def accuracy(model: ToyModel, data: TaskData, task_index: int) -> float:
    """Token accuracy against the clean labels of ``data``."""
    ti = np.full(data.n_tokens, task_index, dtype=np.intp)
    return float(np.mean(model.predict(data.X, ti) == data.y_clean))
