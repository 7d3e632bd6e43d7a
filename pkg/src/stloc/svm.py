"""Linear SVM: weighted hinge-loss SGD with hard negative mining.

The solver is primal SGD (Pegasos schedule ``eta_t = 1 / (lambda t)`` with
``lambda = 1 / (C n)``).  The bias is learned as the weight of a constant
feature ``bias_term``.  Positive examples are weighted by ``|neg| / |pos|``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._kernels import pegasos_epochs
from .errors import DataError

MODEL_MAGIC = b"STLM"


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray
    bias: float
    # SGD steps taken so far; lets warm-started training continue the schedule
    steps: int = field(default=0, compare=False)

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64).ravel()
        if not (np.isfinite(w).all() and math.isfinite(self.bias)):
            raise ValueError("model parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def __eq__(self, other):
        return (isinstance(other, LinearModel) and np.array_equal(self.weights, other.weights)
                and self.bias == other.bias)

    def decision(self, X: np.ndarray) -> np.ndarray:
        """Scores of the rows of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"expected (n, {self.dim}) features, got {X.shape}")
        return X @ self.weights + self.bias

    def save(self, path: str | Path) -> None:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        payload = np.concatenate([self.weights, [self.bias]]).astype("<f8").tobytes()
        tmp.write_bytes(MODEL_MAGIC + struct.pack("<I", self.dim) + payload)
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> "LinearModel":
        raw = Path(path).read_bytes()
        if len(raw) < 8 or raw[:4] != MODEL_MAGIC:
            raise DataError(f"{path}: not an STLM model file")
        (dim,) = struct.unpack("<I", raw[4:8])
        if len(raw) != 8 + 8 * (dim + 1):
            raise DataError(f"{path}: expected {8 + 8 * (dim + 1)} bytes, found {len(raw)}")
        vals = np.frombuffer(raw, dtype="<f8", offset=8)
        return cls(vals[:dim].copy(), float(vals[dim]))


@dataclass(frozen=True)
class SvmParams:
    C: float = 1.0
    epochs: int = 10
    lr_offset: float = 0.0
    seed: int = 0
    threshold: float = -1.0
    rounds: int = 3
    bias_term: float = 1.0
    neg_ratio: int = 10

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if self.epochs < 1 or self.rounds < 1:
            raise ValueError("epochs and rounds must be >= 1")


def _as_matrix(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[None]
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-D feature array, got shape {a.shape}")
    return a


def train(pos, neg, p: SvmParams = SvmParams(), init: LinearModel | None = None,
          epochs: int | None = None) -> LinearModel:
    """Train on positive and negative feature rows.

    With ``init`` the weights and the step counter continue from that
    model (warm start).
    """
    pos = _as_matrix(pos, "pos")
    neg = _as_matrix(neg, "neg")
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError(f"need at least one positive and one negative (got {len(pos)} and {len(neg)})")
    if pos.shape[1] != neg.shape[1]:
        raise ValueError(f"dimension mismatch: positives {pos.shape[1]}, negatives {neg.shape[1]}")
    dim = pos.shape[1]
    if init is not None and init.dim != dim:
        raise ValueError(f"warm-start model has dimension {init.dim}, data {dim}")
    X = np.empty((len(pos) + len(neg), dim + 1))
    X[:len(pos), :dim] = pos
    X[len(pos):, :dim] = neg
    X[:, dim] = p.bias_term
    y = np.concatenate([np.ones(len(pos)), -np.ones(len(neg))])
    sw = np.concatenate([np.full(len(pos), len(neg) / len(pos)), np.ones(len(neg))])
    n = len(y)
    lam = 1.0 / (p.C * n)
    if init is None:
        w = np.zeros(dim + 1)
        t0 = 0
    else:
        w = np.concatenate([init.weights, [init.bias / p.bias_term]])
        t0 = init.steps
    rng = np.random.default_rng(p.seed + t0)
    nep = p.epochs if epochs is None else epochs
    order = np.concatenate([rng.permutation(n) for _ in range(nep)]).astype(np.int64)
    t = pegasos_epochs(X, y, sw, order, w, t0, lam, p.lr_offset)
    return LinearModel(w[:dim].copy(), float(w[dim] * p.bias_term), steps=int(t))


def score(m: LinearModel, x) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != m.dim:
        raise ValueError(f"feature has dimension {x.shape[0]}, model {m.dim}")
    return float(x @ m.weights + m.bias)


def mine_hard_negatives(m: LinearModel, pool, h: float = -1.0) -> np.ndarray:
    """Rows of ``pool`` scoring at least ``h``, in their original order."""
    pool = np.asarray(pool, dtype=np.float64)
    if pool.size == 0:
        return pool.reshape(0, m.dim)
    pool = _as_matrix(pool, "pool")
    return pool[m.decision(pool) >= h]


def initial_negatives(n_pool: int, n_pos: int, p: SvmParams) -> np.ndarray:
    """Sorted indices of the seeded initial negative sample."""
    k = min(n_pool, p.neg_ratio * n_pos)
    rng = np.random.default_rng(p.seed)
    return np.sort(rng.choice(n_pool, size=k, replace=False))


def train_mined(pos, neg_pool, p: SvmParams = SvmParams()) -> LinearModel:
    """Alternate training and re-mining the pool at ``p.threshold`` for ``p.rounds`` rounds.

    A round whose mining finds no hard negative keeps the previous negatives.
    """
    pos = _as_matrix(pos, "pos")
    pool = _as_matrix(neg_pool, "neg_pool")
    if len(pool) == 0:
        raise ValueError("negative pool is empty")
    negs = pool[initial_negatives(len(pool), len(pos), p)]
    model = train(pos, negs, p)
    for _ in range(p.rounds - 1):
        hard = mine_hard_negatives(model, pool, p.threshold)
        if len(hard):
            negs = hard
        model = train(pos, negs, p)
    return model


class ClassifierBank:
    """One linear model per class, all of the same dimension."""

    def __init__(self, models: dict[str, LinearModel]):
        if not models:
            raise ValueError("empty classifier bank")
        dims = {m.dim for m in models.values()}
        if len(dims) != 1:
            raise ValueError(f"models have mixed dimensions {sorted(dims)}")
        self.classes = list(models)
        self.models = dict(models)
        self.dim = dims.pop()
        self._W = np.stack([models[c].weights for c in self.classes], axis=1)
        self._b = np.array([models[c].bias for c in self.classes])

    def __contains__(self, c: str) -> bool:
        return c in self.models

    def model(self, c: str) -> LinearModel:
        try:
            return self.models[c]
        except KeyError:
            raise KeyError(f"unknown class {c!r}; bank has {self.classes}") from None

    def score(self, c: str, f) -> float:
        return score(self.model(c), f)

    def scores(self, X: np.ndarray) -> np.ndarray:
        """``(n, n_classes)`` score matrix in ``self.classes`` order."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"expected (n, {self.dim}) features, got {X.shape}")
        return X @ self._W + self._b

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for c in self.classes:
            self.models[c].save(directory / f"{c}.stlm")
        tmp = directory / "manifest.txt.tmp"
        tmp.write_text("".join(f"{c}\n" for c in self.classes))
        tmp.replace(directory / "manifest.txt")

    @classmethod
    def load(cls, directory: str | Path) -> "ClassifierBank":
        directory = Path(directory)
        manifest = directory / "manifest.txt"
        if not manifest.exists():
            raise DataError(f"{manifest}: missing bank manifest")
        classes = [ln.strip() for ln in manifest.read_text().splitlines() if ln.strip()]
        return cls({c: LinearModel.load(directory / f"{c}.stlm") for c in classes})


def accuracy(m: LinearModel, pos, neg) -> float:
    pos, neg = _as_matrix(pos, "pos"), _as_matrix(neg, "neg")
    correct = (m.decision(pos) > 0).sum() + (m.decision(neg) <= 0).sum()
    return float(correct) / (len(pos) + len(neg))


def stack(rows: Sequence[np.ndarray], dim: int) -> np.ndarray:
    return np.vstack(rows) if len(rows) else np.zeros((0, dim))
