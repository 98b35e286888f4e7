"""Token-level loss aggregation: EW, VITW, TLA, plus RLW/DWA baselines.

Every aggregate here is a linear functional of the per-token losses, so
each mode is expressed as per-token coefficients (``token_coefficients``)
and the scalar loss is their dot product with the token losses.  The
trainer backpropagates through the same coefficients.

Baselines:

* RLW draws ``w = N * softmax(g)`` with ``g ~ N(0, I)`` afresh per call.
* DWA sets ``w = N * softmax(r / T)`` with ``r_i = L_i(t-1) / L_i(t-2)``,
  the ratio of the last two per-unit average losses, and all-ones until
  two history points exist.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import Strategy, WeightVector


class LossMode(enum.Enum):
    EW = "ew"
    VITW = "vitw"
    TLA = "tla"
    RLW = "rlw"
    DWA = "dwa"


class EmptyBatch(ValueError):
    pass


@dataclass(frozen=True)
class TokenLossBatch:
    """Flat per-token losses tagged with their unit and sample.

    ``unit_index[t]`` indexes into ``units``.
    """

    units: tuple[str, ...]
    unit_index: np.ndarray
    sample_id: np.ndarray
    losses: np.ndarray

    def __post_init__(self):
        ui = np.ascontiguousarray(self.unit_index, dtype=np.intp)
        sid = np.ascontiguousarray(self.sample_id, dtype=np.int64)
        loss = np.ascontiguousarray(self.losses, dtype=np.float64)
        if not (ui.shape == sid.shape == loss.shape) or loss.ndim != 1:
            raise ValueError("unit_index, sample_id and losses must be equal-length vectors")
        if loss.size == 0:
            raise EmptyBatch("token loss batch has no tokens")
        if not np.all(np.isfinite(loss)) or np.any(loss < 0):
            raise ValueError("token losses must be finite and non-negative")
        if ui.min() < 0 or ui.max() >= len(self.units):
            raise ValueError("unit index out of range")
        for a in (ui, sid, loss):
            a.setflags(write=False)
        object.__setattr__(self, "units", tuple(self.units))
        object.__setattr__(self, "unit_index", ui)
        object.__setattr__(self, "sample_id", sid)
        object.__setattr__(self, "losses", loss)

    @classmethod
    def from_entries(cls, entries, units=None) -> "TokenLossBatch":
        """Build from ``(unit, sample_id, token_losses)`` triples."""
        entries = list(entries)
        if units is None:
            units = tuple(dict.fromkeys(e[0] for e in entries))
        index = {u: k for k, u in enumerate(units)}
        ui, sid, loss = [], [], []
        for unit, sample, toks in entries:
            if unit not in index:
                raise KeyError(f"unit {unit!r} not in {units}")
            toks = np.atleast_1d(np.asarray(toks, dtype=np.float64))
            ui.extend([index[unit]] * toks.size)
            sid.extend([sample] * toks.size)
            loss.extend(toks.tolist())
        return cls(tuple(units), np.array(ui, dtype=np.intp), np.array(sid, dtype=np.int64),
                   np.array(loss, dtype=np.float64))

    @property
    def n_tokens(self) -> int:
        return int(self.losses.size)

    def unit_sums(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-unit (loss sum, token count)."""
        return kernels.segment_sums(self.losses, self.unit_index, len(self.units))


def _unit_weights(units: tuple[str, ...], weights: WeightVector | None) -> np.ndarray:
    if weights is None:
        return np.ones(len(units))
    try:
        return np.array([weights[u] for u in units])
    except ValueError:
        missing = sorted(set(units) - set(weights.units))
        raise KeyError(f"no weight for units {missing}") from None


def unit_coefficients(batch: TokenLossBatch, mode: LossMode | str,
                      weights: WeightVector | None = None) -> np.ndarray:
    """Per-unit multiplier such that the loss is ``sum_u coef[u] * loss_sum[u]``."""
    mode = LossMode(mode)
    _, counts = batch.unit_sums()
    counts = counts.astype(np.float64)
    present = counts > 0
    if mode is LossMode.EW:
        return np.where(present, 1.0 / counts.sum(), 0.0)
    if mode is LossMode.TLA:
        coef = np.zeros_like(counts)
        coef[present] = 1.0 / (present.sum() * counts[present])
        return coef
    lam = _unit_weights(batch.units, weights)
    if np.any(lam[present] <= 0):
        raise ValueError("weights of units present in the batch must be positive")
    return np.where(present, lam / float(np.dot(lam[present], counts[present])), 0.0)


def token_coefficients(batch: TokenLossBatch, mode: LossMode | str,
                       weights: WeightVector | None = None) -> np.ndarray:
    return unit_coefficients(batch, mode, weights)[batch.unit_index]


def ew_loss(batch: TokenLossBatch) -> float:
    sums, counts = batch.unit_sums()
    return float(sums.sum() / counts.sum())


def vitw_loss(batch: TokenLossBatch, weights: WeightVector) -> float:
    sums, counts = batch.unit_sums()
    lam = _unit_weights(batch.units, weights)
    present = counts > 0
    if np.any(lam[present] <= 0):
        raise ValueError("weights of units present in the batch must be positive")
    return float((lam[present] * sums[present]).sum() / (lam[present] * counts[present]).sum())


def tla_loss(batch: TokenLossBatch) -> float:
    sums, counts = batch.unit_sums()
    present = counts > 0
    return float(np.mean(sums[present] / counts[present]))


def aggregate(batch: TokenLossBatch, mode: LossMode | str,
              weights: WeightVector | None = None) -> float:
    mode = LossMode(mode)
    if mode is LossMode.EW:
        return ew_loss(batch)
    if mode is LossMode.TLA:
        return tla_loss(batch)
    if weights is None:
        raise ValueError(f"{mode.value} aggregation needs a weight vector")
    return vitw_loss(batch, weights)


def _scaled_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return z.size * e / e.sum()


def rlw_weights(rng: np.random.Generator, units) -> WeightVector:
    """Random loss weights; the caller owns ``rng``."""
    units = tuple(units) if not isinstance(units, int) else tuple(str(k) for k in range(units))
    g = rng.standard_normal(len(units))
    return WeightVector(units, _scaled_softmax(g), Strategy.RLW)


@dataclass
class DwaState:
    """Loss history for dynamic weight averaging.  Single owner; not thread-safe."""

    temperature: float = 2.0
    prev: np.ndarray | None = None
    prev2: np.ndarray | None = None

    def __post_init__(self):
        if not (self.temperature > 0 and np.isfinite(self.temperature)):
            raise ValueError("DWA temperature must be positive")

    def push(self, unit_losses) -> None:
        """Record the newest per-unit average losses."""
        v = np.asarray(unit_losses, dtype=np.float64).copy()
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("DWA loss history must be finite and positive")
        self.prev2, self.prev = self.prev, v


def dwa_weights(state: DwaState, units, unit_losses=None) -> tuple[WeightVector, DwaState]:
    """Weights from the stored history, then advance it with ``unit_losses``.

    The returned vector depends only on history recorded before this call.
    """
    units = tuple(units) if not isinstance(units, int) else tuple(str(k) for k in range(units))
    if state.prev is None or state.prev2 is None:
        lam = np.ones(len(units))
    else:
        ratio = state.prev / state.prev2
        lam = _scaled_softmax(ratio / state.temperature)
    if unit_losses is not None:
        state.push(unit_losses)
    return WeightVector(units, lam, Strategy.DWA, {"temperature": state.temperature}), state
