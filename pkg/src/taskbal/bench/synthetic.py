"""Seeded synthetic multi-task classification problems.

Each task is a bag of sequences; every token is a classification example.
Token inputs live (up to isotropic jitter) in a task-specific k-dimensional
subspace of R^d and the clean label is ``argmax(A z)`` for a rule matrix
``A`` shared by all tasks.  Subspaces of tasks i and j satisfy
``P_i^T P_j = rho_ij I`` exactly, where ``rho`` is the configured overlap
matrix, so overlap controls how much a model fit on one task already
solves the other.  ``noise_level`` flips training labels to a uniformly
random class with probability ``0.75 * noise_level``; validation and test
labels stay clean.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

LABEL_FLIP_SCALE = 0.75


class InvalidConfig(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticTaskConfig:
    id: str
    seq_len: tuple[int, int] = (4, 12)
    noise_level: float = 0.0
    overlap: dict = field(default_factory=dict)
    samples: int = 400
    classes: int = 4
    group: str | None = None

    def __post_init__(self):
        lo, hi = (int(v) for v in self.seq_len)
        object.__setattr__(self, "seq_len", (lo, hi))
        object.__setattr__(self, "overlap", {str(k): float(v) for k, v in dict(self.overlap).items()})
        if not (1 <= lo <= hi):
            raise InvalidConfig(f"{self.id}: need 1 <= min <= max sequence length, got {self.seq_len}")
        if not (0.0 <= self.noise_level <= 1.0):
            raise InvalidConfig(f"{self.id}: noise_level must lie in [0, 1]")
        if self.samples < 1:
            raise InvalidConfig(f"{self.id}: samples must be >= 1")
        if self.classes < 2:
            raise InvalidConfig(f"{self.id}: classes must be >= 2")
        for other, v in self.overlap.items():
            if not (0.0 <= v <= 1.0):
                raise InvalidConfig(f"{self.id}: overlap with {other} must lie in [0, 1]")


@dataclass(frozen=True)
class SuiteConfig:
    tasks: tuple[SyntheticTaskConfig, ...]
    input_dim: int = 48
    latent_dim: int = 3
    feature_dim: int = 8
    input_noise: float = 1.5
    val_fraction: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise InvalidConfig(f"duplicate synthetic task ids in {ids}")
        if not ids:
            raise InvalidConfig("suite has no tasks")
        if self.input_dim < len(ids) * self.latent_dim:
            raise InvalidConfig("input_dim must be at least n_tasks * latent_dim")
        if not (0.0 < self.val_fraction < 1.0):
            raise InvalidConfig("val_fraction must lie in (0, 1)")
        overlap_matrix(self.tasks)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.tasks)

    def to_json(self) -> dict:
        d = asdict(self)
        d["tasks"] = [dict(asdict(t), seq_len=list(t.seq_len)) for t in self.tasks]
        return d

    @classmethod
    def from_json(cls, data) -> "SuiteConfig":
        try:
            tasks = tuple(SyntheticTaskConfig(**{**t, "seq_len": tuple(t.get("seq_len", (4, 12)))})
                          for t in data["tasks"])
            rest = {k: v for k, v in data.items() if k != "tasks"}
            return cls(tasks, **rest)
        except (TypeError, KeyError) as exc:
            raise InvalidConfig(f"malformed suite config: {exc}") from exc

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_overlap(self, a: str, b: str, value: float) -> "SuiteConfig":
        tasks = []
        for t in self.tasks:
            ov = dict(t.overlap)
            if t.id == a:
                ov[b] = value
            elif t.id == b:
                ov[a] = value
            tasks.append(SyntheticTaskConfig(**{**asdict(t), "overlap": ov}))
        return SuiteConfig(tuple(tasks), **{k: v for k, v in asdict(self).items() if k != "tasks"})

    def with_task(self, task_id: str, **changes) -> "SuiteConfig":
        tasks = tuple(SyntheticTaskConfig(**{**asdict(t), **changes}) if t.id == task_id else t
                      for t in self.tasks)
        return SuiteConfig(tasks, **{k: v for k, v in asdict(self).items() if k != "tasks"})


def overlap_matrix(tasks) -> np.ndarray:
    """Symmetric overlap matrix with unit diagonal; must be positive semidefinite."""
    ids = [t.id for t in tasks]
    n = len(ids)
    R = np.eye(n)
    for a, t in enumerate(tasks):
        for other, v in t.overlap.items():
            if other not in ids:
                raise InvalidConfig(f"{t.id}: overlap refers to unknown task {other!r}")
            b = ids.index(other)
            if b == a:
                raise InvalidConfig(f"{t.id}: overlap with itself")
            R[a, b] = v
    if not np.allclose(R, R.T, atol=0, rtol=0):
        raise InvalidConfig("overlaps are not symmetric")
    if np.linalg.eigvalsh(R).min() < -1e-9:
        raise InvalidConfig("overlap matrix is not positive semidefinite")
    return R


@dataclass
class TaskData:
    """Tokens of one task split into samples.

    Sample ``s`` owns tokens ``offsets[s]:offsets[s + 1]``.
    """

    id: str
    classes: int
    X: np.ndarray
    y: np.ndarray
    y_clean: np.ndarray
    offsets: np.ndarray

    @property
    def n_samples(self) -> int:
        return len(self.offsets) - 1

    @property
    def n_tokens(self) -> int:
        return int(self.offsets[-1])

    def token_index(self, samples) -> np.ndarray:
        samples = np.asarray(samples, dtype=np.intp)
        if samples.size == 0:
            return np.zeros(0, dtype=np.intp)
        starts = self.offsets[samples]
        lens = self.offsets[samples + 1] - starts
        rel = np.arange(lens.sum()) - np.repeat(np.cumsum(lens) - lens, lens)
        return np.repeat(starts, lens) + rel

    def select(self, samples) -> "TaskData":
        samples = np.asarray(samples, dtype=np.intp)
        idx = self.token_index(samples)
        lens = self.offsets[samples + 1] - self.offsets[samples]
        offsets = np.concatenate([[0], np.cumsum(lens)]).astype(np.intp)
        return TaskData(self.id, self.classes, self.X[idx], self.y[idx], self.y_clean[idx], offsets)


@dataclass
class TaskSplits:
    train: TaskData
    val: TaskData
    test: TaskData


def _rng_for(seed: int, *labels) -> np.random.Generator:
    words = [int(seed) & 0xFFFFFFFF]
    for label in labels:
        words.append(int.from_bytes(hashlib.sha256(str(label).encode()).digest()[:4], "little"))
    return np.random.default_rng(np.random.SeedSequence(words))


def _task_bases(suite: SuiteConfig, rng: np.random.Generator):
    ids = suite.ids
    n, k, d = len(ids), suite.latent_dim, suite.input_dim
    R = overlap_matrix(suite.tasks)
    evals, evecs = np.linalg.eigh(R)
    L = evecs * np.sqrt(np.clip(evals, 0.0, None))
    Q, _ = np.linalg.qr(rng.standard_normal((d, n * k)))
    blocks = [Q[:, m * k:(m + 1) * k] for m in range(n)]
    bases = [sum(L[a, m] * blocks[m] for m in range(n)) for a in range(n)]
    c_max = max(t.classes for t in suite.tasks)
    rule = rng.standard_normal((c_max, k))
    return bases, rule


def _draw(cfg: SyntheticTaskConfig, n_samples: int, basis, rule, suite: SuiteConfig,
          rng: np.random.Generator, noisy: bool) -> TaskData:
    lo, hi = cfg.seq_len
    lens = rng.integers(lo, hi + 1, size=n_samples)
    n_tok = int(lens.sum())
    z = rng.standard_normal((n_tok, suite.latent_dim))
    X = z @ basis.T + suite.input_noise * rng.standard_normal((n_tok, suite.input_dim))
    y_clean = np.argmax(z @ rule[:cfg.classes].T, axis=1)
    y = y_clean.copy()
    flip = rng.random(n_tok) < LABEL_FLIP_SCALE * cfg.noise_level
    rand = rng.integers(0, cfg.classes, size=n_tok)
    if noisy:
        y[flip] = rand[flip]
    offsets = np.concatenate([[0], np.cumsum(lens)]).astype(np.intp)
    return TaskData(cfg.id, cfg.classes, X, y.astype(np.intp), y_clean.astype(np.intp), offsets)


def generate_tasks(suite: SuiteConfig, seed: int) -> dict[str, TaskSplits]:
    """Train/validation/test splits per task, fully determined by ``seed``.

    ``samples`` counts the pool before the validation holdout; the test set
    is an independent draw the size of the validation split.
    """
    bases, rule = _task_bases(suite, _rng_for(seed, "geometry"))
    out = {}
    for cfg, basis in zip(suite.tasks, bases):
        rng = _rng_for(seed, "data", cfg.id)
        pool = _draw(cfg, cfg.samples, basis, rule, suite, rng, noisy=True)
        n_val = max(1, int(round(suite.val_fraction * cfg.samples)))
        if n_val >= cfg.samples:
            raise InvalidConfig(f"{cfg.id}: too few samples for a validation split")
        perm = rng.permutation(cfg.samples)
        val = pool.select(np.sort(perm[:n_val]))
        train = pool.select(np.sort(perm[n_val:]))
        test = _draw(cfg, n_val, basis, rule, suite, _rng_for(seed, "test", cfg.id), noisy=False)
        # Held-out splits are scored against clean labels.
        val.y = val.y_clean.copy()
        out[cfg.id] = TaskSplits(train, val, test)
    return out


class EmptySubset(ValueError):
    pass


def sample_subsets(n_samples: int, r_large: float, r_mini: float, seed,
                   label: str = "") -> tuple[np.ndarray, np.ndarray]:
    """Nested random subsets (large, mini) of ``range(n_samples)``.

    The mini subset is drawn from the large one.  Returned indices are sorted.
    """
    if not (0.0 < r_mini <= r_large <= 1.0):
        raise ValueError(f"need 0 < r_mini <= r_large <= 1, got {r_mini}, {r_large}")
    n_large = int(round(r_large * n_samples))
    n_mini = int(round(r_mini * n_samples))
    if n_large < 1 or n_mini < 1:
        raise EmptySubset(f"rates ({r_large}, {r_mini}) on {n_samples} samples round to an empty subset")
    rng = seed if isinstance(seed, np.random.Generator) else _rng_for(seed, "subset", label)
    large = rng.permutation(n_samples)[:n_large]
    mini = rng.permutation(large)[:n_mini]
    return np.sort(large), np.sort(mini)


def default_suite() -> SuiteConfig:
    """Four tasks: two related easy ones, a noisy hard one, an unrelated one."""
    return SuiteConfig(tasks=(
        SyntheticTaskConfig("caption", seq_len=(6, 12), noise_level=0.1,
                            overlap={"vqa": 0.6, "ground": 0.3}, samples=1000, classes=4),
        SyntheticTaskConfig("vqa", seq_len=(2, 6), noise_level=0.05,
                            overlap={"caption": 0.6}, samples=1600, classes=4),
        SyntheticTaskConfig("ground", seq_len=(4, 8), noise_level=0.6,
                            overlap={"caption": 0.3}, samples=1000, classes=6),
        SyntheticTaskConfig("ocr", seq_len=(3, 8), noise_level=0.3,
                            overlap={}, samples=1400, classes=5),
    ))


def stable_seed(seed: int, *labels) -> int:
    """Deterministic 32-bit seed derived from a base seed and labels."""
    return int(_rng_for(seed, *labels).integers(0, 2**32 - 1))
