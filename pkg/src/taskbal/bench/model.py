"""Shared linear feature map with per-task softmax heads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels


@dataclass
class ToyModel:
    """``logits = heads[task] @ (features @ x)``.

    ``features`` is (feature_dim, input_dim); ``heads`` is
    (n_tasks, max_classes, feature_dim).  Task ``t`` uses only its first
    ``classes[t]`` head rows; the rest stay zero and receive no gradient.
    """

    features: np.ndarray
    heads: np.ndarray
    classes: np.ndarray
    task_ids: tuple[str, ...]

    @classmethod
    def init(cls, task_ids, classes, input_dim: int, feature_dim: int,
             rng: np.random.Generator, scale: float = 1.0) -> "ToyModel":
        classes = np.asarray(classes, dtype=np.intp)
        F = scale * rng.standard_normal((feature_dim, input_dim)) / np.sqrt(input_dim)
        H = np.zeros((len(task_ids), int(classes.max()), feature_dim))
        return cls(F, H, classes, tuple(task_ids))

    def copy(self) -> "ToyModel":
        return ToyModel(self.features.copy(), self.heads.copy(), self.classes.copy(), self.task_ids)

    @property
    def n_params(self) -> int:
        return int(self.features.size + sum(c * self.heads.shape[2] for c in self.classes))

    def flat_params(self) -> np.ndarray:
        parts = [self.features.ravel()]
        parts += [self.heads[t, :c].ravel() for t, c in enumerate(self.classes)]
        return np.concatenate(parts)

    def set_flat_params(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        k = self.features.size
        self.features = theta[:k].reshape(self.features.shape).copy()
        h = self.heads.shape[2]
        for t, c in enumerate(self.classes):
            self.heads[t, :c] = theta[k:k + c * h].reshape(c, h)
            k += c * h

    def flat_grad(self, dF: np.ndarray, dH: np.ndarray) -> np.ndarray:
        parts = [dF.ravel()] + [dH[t, :c].ravel() for t, c in enumerate(self.classes)]
        return np.concatenate(parts)

    def logits(self, X: np.ndarray, task_index: np.ndarray) -> np.ndarray:
        f = X @ self.features.T
        return kernels.head_forward(f, task_index, self.heads)

    def predict(self, X: np.ndarray, task_index: np.ndarray) -> np.ndarray:
        z = self.logits(X, task_index)
        ncls = self.classes[task_index]
        z = np.where(np.arange(z.shape[1])[None, :] < ncls[:, None], z, -np.inf)
        return np.argmax(z, axis=1)

    def forward_backward(self, X, y, task_index, coef):
        """Per-token NLL and parameter gradients of ``sum(coef * nll)``."""
        f = X @ self.features.T
        z = kernels.head_forward(f, task_index, self.heads)
        nll, dz = kernels.softmax_xent(z, self.classes[task_index], y, coef)
        dH, df = kernels.head_backward(f, task_index, self.heads, dz)
        dF = df.T @ X
        return nll, dF, dH

    def to_json(self) -> dict:
        return {"task_ids": list(self.task_ids), "classes": self.classes.tolist(),
                "features": self.features.tolist(), "heads": self.heads.tolist()}
