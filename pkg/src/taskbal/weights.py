"""Strategy weight vectors, their integration, and temperature selection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Strategy, WeightVector
from .measure import ContributionMatrix, DifficultyVector

WEIGHT_RANGE = (0.5, 2.0)


@dataclass(frozen=True)
class Temperature:
    value: float

    def __post_init__(self):
        v = float(self.value)
        if not (math.isfinite(v) and v > 0):
            raise ValueError(f"temperature must be positive and finite, got {self.value!r}")
        object.__setattr__(self, "value", v)

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class AlphaCoefficients:
    out: float = 0.25
    inward: float = 0.25
    diff: float = 0.5

    def __post_init__(self):
        for name in ("out", "inward", "diff"):
            v = float(getattr(self, name))
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"alpha.{name} must lie in [0, 1], got {v}")
            object.__setattr__(self, name, v)
        if abs(self.out + self.inward + self.diff - 1.0) > 1e-9:
            raise ValueError(
                f"alpha coefficients must sum to 1, got {self.out + self.inward + self.diff}")

    @classmethod
    def parse(cls, text: str) -> "AlphaCoefficients":
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"alpha needs three comma-separated values, got {text!r}")
        return cls(*parts)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.out, self.inward, self.diff)


def _as_temperature(T) -> Temperature:
    return T if isinstance(T, Temperature) else Temperature(T)


def outward_contribution(cm: ContributionMatrix) -> np.ndarray:
    """Mean contribution each unit gives to the others (row means, no diagonal)."""
    n = cm.n
    if n < 2:
        raise ValueError("outward contribution needs at least two units")
    v = cm.values
    return (v.sum(axis=1) - np.diag(v)) / (n - 1)


def inward_contribution(cm: ContributionMatrix) -> np.ndarray:
    """Mean contribution each unit receives from the others (column means)."""
    n = cm.n
    if n < 2:
        raise ValueError("inward contribution needs at least two units")
    v = cm.values
    return (v.sum(axis=0) - np.diag(v)) / (n - 1)


def scaled_softmax(scores, T, sign: int = 1) -> np.ndarray:
    """``N * softmax(sign * scores / T)`` as a bare array."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if s.size == 0:
        raise ValueError("empty score vector")
    if not np.all(np.isfinite(s)):
        raise ValueError(f"non-finite score in {s}")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    z = sign * s / float(_as_temperature(T))
    z -= z.max()
    e = np.exp(z)
    return s.size * e / e.sum()


def softmax_weights(scores, T, sign: int = 1, units=None,
                    strategy: Strategy = Strategy.MANUAL) -> WeightVector:
    T = _as_temperature(T)
    lam = scaled_softmax(scores, T, sign)
    if units is None:
        units = tuple(str(k) for k in range(lam.size))
    return WeightVector(tuple(units), lam, strategy, {"temperature": T.value, "sign": sign})


def lambda_out(cm: ContributionMatrix, T) -> WeightVector:
    return softmax_weights(outward_contribution(cm), T, +1, cm.units, Strategy.OUT)


def lambda_in(cm: ContributionMatrix, T) -> WeightVector:
    return softmax_weights(inward_contribution(cm), T, -1, cm.units, Strategy.IN)


def lambda_diff(dv: DifficultyVector, T) -> WeightVector:
    return softmax_weights(dv.values, T, +1, dv.units, Strategy.DIFF)


def integrate(out: WeightVector, inward: WeightVector, diff: WeightVector,
              alpha: AlphaCoefficients | None = None) -> WeightVector:
    """Convex combination of the three strategy vectors."""
    alpha = alpha or AlphaCoefficients()
    if not isinstance(alpha, AlphaCoefficients):
        alpha = AlphaCoefficients(*alpha)
    if not (out.units == inward.units == diff.units):
        raise ValueError("strategy vectors cover different units")
    lam = alpha.out * out.values + alpha.inward * inward.values + alpha.diff * diff.values
    prov = {"alpha": list(alpha.as_tuple())}
    temps = {w.provenance.get("temperature") for w in (out, inward, diff)} - {None}
    if len(temps) == 1:
        prov["temperature"] = temps.pop()
    return WeightVector(out.units, lam, Strategy.INTEGRATED, prov)


def strategy_scores(cm: ContributionMatrix, dv: DifficultyVector):
    """(outward, inward, difficulty) score vectors feeding the softmaxes."""
    return outward_contribution(cm), inward_contribution(cm), np.asarray(dv.values, dtype=float)


_SIGNS = (1, -1, 1)


def _in_range(scores, T, alpha: AlphaCoefficients, lo: float, hi: float) -> bool:
    for s, sign, a in zip(scores, _SIGNS, alpha.as_tuple()):
        if a == 0.0:
            continue
        lam = scaled_softmax(s, T, sign)
        if lam.min() < lo or lam.max() > hi:
            return False
    return True


@dataclass(frozen=True)
class TemperatureChoice:
    temperature: Temperature
    attainable: bool
    iterations: int


def auto_temperature(scores, alpha: AlphaCoefficients | None = None,
                     bounds: tuple[float, float] = (0.05, 20.0), *,
                     rtol: float = 1e-3, weight_range: tuple[float, float] = WEIGHT_RANGE,
                     ) -> TemperatureChoice:
    """Smallest temperature keeping every strategy weight inside ``weight_range``.

    ``scores`` is the (outward, inward, difficulty) triple.  Strategies whose
    alpha coefficient is zero do not constrain the choice.  Softmax weights
    flatten monotonically as T grows, so feasibility is monotone in T and
    bisection applies; the returned value is the feasible end of the final
    bracket.  When even ``bounds[1]`` is infeasible it is returned with
    ``attainable=False``.
    """
    alpha = alpha or AlphaCoefficients()
    t_lo, t_hi = (float(b) for b in bounds)
    if not (0 < t_lo < t_hi and math.isfinite(t_hi)):
        raise ValueError(f"invalid temperature bounds {bounds!r}")
    scores = [np.asarray(s, dtype=float) for s in scores]
    lo_w, hi_w = weight_range
    if _in_range(scores, t_lo, alpha, lo_w, hi_w):
        return TemperatureChoice(Temperature(t_lo), True, 0)
    if not _in_range(scores, t_hi, alpha, lo_w, hi_w):
        return TemperatureChoice(Temperature(t_hi), False, 0)
    a, b = t_lo, t_hi
    it = 0
    while (b - a) > rtol * b:
        mid = 0.5 * (a + b)
        if _in_range(scores, mid, alpha, lo_w, hi_w):
            b = mid
        else:
            a = mid
        it += 1
    return TemperatureChoice(Temperature(b), True, it)


@dataclass(frozen=True)
class StrategyWeights:
    out: WeightVector
    inward: WeightVector
    diff: WeightVector
    integrated: WeightVector
    temperature: Temperature
    alpha: AlphaCoefficients
    temperature_attainable: bool = True

    def to_json(self) -> dict:
        return {
            "temperature": self.temperature.value,
            "temperature_attainable": self.temperature_attainable,
            "alpha": list(self.alpha.as_tuple()),
            "out": self.out.to_json(),
            "in": self.inward.to_json(),
            "diff": self.diff.to_json(),
            "integrated": self.integrated.to_json(),
        }


def compute_weights(cm: ContributionMatrix, dv: DifficultyVector, T="auto",
                    alpha: AlphaCoefficients | None = None, **auto_kwargs) -> StrategyWeights:
    """All four weight vectors from measured contribution and difficulty.

    ``T="auto"`` selects the temperature with :func:`auto_temperature`.
    """
    alpha = alpha or AlphaCoefficients()
    if cm.units != dv.units:
        raise ValueError("contribution matrix and difficulty vector cover different units")
    attainable = True
    if isinstance(T, str):
        if T != "auto":
            raise ValueError(f"temperature must be a number or 'auto', got {T!r}")
        choice = auto_temperature(strategy_scores(cm, dv), alpha, **auto_kwargs)
        T, attainable = choice.temperature, choice.attainable
    T = _as_temperature(T)
    out, inward, diff = lambda_out(cm, T), lambda_in(cm, T), lambda_diff(dv, T)
    return StrategyWeights(out, inward, diff, integrate(out, inward, diff, alpha),
                           T, alpha, attainable)
