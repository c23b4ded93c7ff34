"""Second-order factorization machine for user/item rating prediction.

    y(x) = w0 + sum_i w_i x_i + sum_{i<j} <v_i, v_j> x_i x_j

Pairwise interactions are evaluated in O(k * nnz) with

    sum_{i<j} <v_i, v_j> x_i x_j
        = 1/2 sum_f [ (sum_i v_if x_i)^2 - sum_i v_if^2 x_i^2 ]

Training is plain SGD on the per-sample objective

    (y_hat - y)^2 + l2_reg * (sum_{i active} w_i^2 + ||v_i||^2)

The global bias is not regularized.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from os import PathLike
from typing import Iterable, Mapping, Sequence

import numpy as np
from numba import njit

from .ingest import RatingDataset

_MAGIC = b"FMARFM01"


class EncodingError(KeyError):
    """User or item unseen in the training data."""


class DivergenceError(FloatingPointError):
    def __init__(self, epoch: int):
        super().__init__(f"SGD diverged (non-finite loss) in epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Sparse input: ascending feature indices with their non-zero values."""

    indices: np.ndarray
    values: np.ndarray
    dimension: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("indices and values must be 1-d and of equal length")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.dimension):
            raise ValueError("indices must be strictly ascending and within dimension")
        if np.any(val == 0):
            raise ValueError("explicit zeros are not allowed")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]], dimension: int) -> "FeatureVector":
        pairs = sorted(pairs)
        return cls(
            np.array([p[0] for p in pairs], dtype=np.int64),
            np.array([p[1] for p in pairs], dtype=np.float64),
            dimension,
        )

    @property
    def active(self) -> list[tuple[int, float]]:
        return [(int(i), float(v)) for i, v in zip(self.indices, self.values)]

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )


def encode(
    user: int, item: int, user_index: Mapping[int, int], item_index: Mapping[int, int]
) -> FeatureVector:
    """One-hot user block followed by one-hot item block."""
    try:
        u = user_index[user]
    except KeyError:
        raise EncodingError(f"unknown user {user}") from None
    try:
        i = item_index[item]
    except KeyError:
        raise EncodingError(f"unknown item {item}") from None
    n_users = len(user_index)
    return FeatureVector(
        np.array([u, n_users + i], dtype=np.int64),
        np.ones(2),
        n_users + len(item_index),
    )


@dataclass(frozen=True)
class FeatureIndex:
    user_index: Mapping[int, int]
    item_index: Mapping[int, int]

    @classmethod
    def from_dataset(cls, ds: RatingDataset) -> "FeatureIndex":
        return cls(
            {u: n for n, u in enumerate(ds.users())},
            {i: n for n, i in enumerate(ds.items())},
        )

    @property
    def dimension(self) -> int:
        return len(self.user_index) + len(self.item_index)

    def encode(self, user: int, item: int) -> FeatureVector:
        return encode(user, item, self.user_index, self.item_index)


@dataclass(eq=False)
class FmModel:
    w0: float
    w: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        self.w0 = float(self.w0)
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        self.V = np.ascontiguousarray(self.V, dtype=np.float64)
        if self.w.ndim != 1 or self.V.ndim != 2 or self.V.shape[0] != self.w.shape[0]:
            raise ValueError(f"inconsistent shapes w={self.w.shape} V={self.V.shape}")
        if self.V.shape[1] < 1:
            raise ValueError("need at least one factor")

    @classmethod
    def zeros(cls, dimension: int, k: int) -> "FmModel":
        return cls(0.0, np.zeros(dimension), np.zeros((dimension, k)))

    @property
    def dimension(self) -> int:
        return self.w.shape[0]

    @property
    def k(self) -> int:
        return self.V.shape[1]

    def copy(self) -> "FmModel":
        return FmModel(self.w0, self.w.copy(), self.V.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.w0) and np.isfinite(self.w).all() and np.isfinite(self.V).all())

    def to_bytes(self) -> bytes:
        n, k = self.V.shape
        return (
            _MAGIC
            + struct.pack("<qqd", n, k, self.w0)
            + self.w.astype("<f8").tobytes()
            + self.V.astype("<f8").tobytes()
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> "FmModel":
        if blob[: len(_MAGIC)] != _MAGIC:
            raise ValueError("not an FM model file")
        off = len(_MAGIC)
        n, k, w0 = struct.unpack_from("<qqd", blob, off)
        off += struct.calcsize("<qqd")
        expected = off + 8 * (n + n * k)
        if len(blob) != expected:
            raise ValueError(f"model file truncated: {len(blob)} bytes, expected {expected}")
        w = np.frombuffer(blob, dtype="<f8", count=n, offset=off).astype(np.float64)
        V = np.frombuffer(blob, dtype="<f8", count=n * k, offset=off + 8 * n).reshape(n, k)
        return cls(w0, w, V.astype(np.float64))

    def save(self, path: str | PathLike) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path: str | PathLike) -> "FmModel":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass(frozen=True)
class TrainConfig:
    k: int = 8
    epochs: int = 100
    learning_rate: float = 0.01
    l2_reg: float = 0.01
    init_stddev: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.epochs < 1:
            raise ValueError("k and epochs must be >= 1")
        if self.learning_rate <= 0 or self.init_stddev <= 0 or self.l2_reg < 0:
            raise ValueError("learning_rate and init_stddev must be > 0, l2_reg >= 0")


def _check_dim(model: FmModel, x: FeatureVector) -> None:
    if x.dimension != model.dimension:
        raise ValueError(f"input dimension {x.dimension} != model dimension {model.dimension}")


def predict(model: FmModel, x: FeatureVector) -> float:
    _check_dim(model, x)
    if x.indices.size == 0:
        return model.w0
    vx = model.V[x.indices] * x.values[:, None]
    linear = float(model.w[x.indices] @ x.values)
    pairwise = 0.5 * float(np.sum(vx.sum(axis=0) ** 2 - (vx**2).sum(axis=0)))
    return model.w0 + linear + pairwise


def predict_naive(model: FmModel, x: FeatureVector) -> float:
    """Explicit double loop over active pairs with w_ij = <v_i, v_j>."""
    _check_dim(model, x)
    active = x.active
    total = model.w0
    for i, xi in active:
        total += model.w[i] * xi
    for a in range(len(active)):
        i, xi = active[a]
        for b in range(a + 1, len(active)):
            j, xj = active[b]
            wij = sum(model.V[i, f] * model.V[j, f] for f in range(model.k))
            total += wij * xi * xj
    return float(total)


def predict_pairs(model: FmModel, index: FeatureIndex, pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    return np.array([predict(model, index.encode(u, i)) for u, i in pairs], dtype=np.float64)


# ---------------------------------------------------------------------------
# training


def squared_loss(model: FmModel, x: FeatureVector, y: float) -> float:
    return (predict(model, x) - y) ** 2


def loss_gradients(model: FmModel, x: FeatureVector, y: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Gradients of (y_hat - y)^2 w.r.t. w0, w[active] and V[active]."""
    err2 = 2.0 * (predict(model, x) - y)
    vx = model.V[x.indices] * x.values[:, None]
    s = vx.sum(axis=0)
    g_w = err2 * x.values
    g_V = err2 * x.values[:, None] * (s[None, :] - vx)
    return err2, g_w, g_V


def gradient_check(model: FmModel, x: FeatureVector, y: float, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error is |a - n| / max(|a|, |n|, 1e-4); the floor keeps
    near-zero gradients from turning rounding noise into large ratios.
    """
    g_w0, g_w, g_V = loss_gradients(model, x, y)
    probe = model.copy()

    def numeric(get, put) -> float:
        orig = get()
        put(orig + step)
        up = squared_loss(probe, x, y)
        put(orig - step)
        down = squared_loss(probe, x, y)
        put(orig)
        return (up - down) / (2 * step)

    pairs = [(g_w0, numeric(lambda: probe.w0, lambda v: setattr(probe, "w0", v)))]
    for a, i in enumerate(x.indices):
        pairs.append((g_w[a], numeric(lambda: probe.w[i], lambda v: probe.w.__setitem__(i, v))))
        for f in range(model.k):
            pairs.append(
                (g_V[a, f], numeric(lambda: probe.V[i, f], lambda v: probe.V.__setitem__((i, f), v)))
            )
    return max(abs(a - n) / max(abs(a), abs(n), 1e-4) for a, n in pairs)


@njit(cache=True)
def _sgd_epoch(indptr, indices, data, y, order, w0, w, V, lr, reg):  # pragma: no cover - jitted
    k = V.shape[1]
    s = np.empty(k)
    sq_err = 0.0
    for t in range(order.shape[0]):
        r = order[t]
        lo, hi = indptr[r], indptr[r + 1]
        pred = w0[0]
        for f in range(k):
            s[f] = 0.0
        sq = 0.0
        for p in range(lo, hi):
            i = indices[p]
            xv = data[p]
            pred += w[i] * xv
            for f in range(k):
                vx = V[i, f] * xv
                s[f] += vx
                sq += vx * vx
        for f in range(k):
            pred += 0.5 * s[f] * s[f]
        pred -= 0.5 * sq
        err = pred - y[r]
        sq_err += err * err
        g = 2.0 * err
        w0[0] -= lr * g
        for p in range(lo, hi):
            i = indices[p]
            xv = data[p]
            w[i] -= lr * (g * xv + 2.0 * reg * w[i])
            for f in range(k):
                v = V[i, f]
                V[i, f] = v - lr * (g * xv * (s[f] - v * xv) + 2.0 * reg * v)
    return sq_err


def design_matrix(ds: RatingDataset, index: FeatureIndex):
    """CSR arrays (indptr, indices, data) and targets for every record."""
    n_users = len(index.user_index)
    m = len(ds)
    indptr = np.arange(0, 2 * m + 1, 2, dtype=np.int64)
    indices = np.empty(2 * m, dtype=np.int64)
    y = np.empty(m, dtype=np.float64)
    for r, rec in enumerate(ds.records):
        indices[2 * r] = index.user_index[rec.user_id]
        indices[2 * r + 1] = n_users + index.item_index[rec.item_id]
        y[r] = rec.rating
    return indptr, indices, np.ones(2 * m), y


def mean_squared_error(model: FmModel, ds: RatingDataset, index: FeatureIndex) -> float:
    truth = np.array([r.rating for r in ds.records], dtype=np.float64)
    preds = predict_pairs(model, index, [(r.user_id, r.item_id) for r in ds.records])
    return float(np.mean((preds - truth) ** 2))


def train_sgd(
    train: RatingDataset,
    cfg: TrainConfig,
    index: FeatureIndex | None = None,
    callback=None,
) -> FmModel:
    """Fit an FM by SGD with one seeded shuffle per epoch.

    ``callback(epoch, model, mean_sq_err)`` is invoked after every epoch;
    ``mean_sq_err`` is the running error seen while the epoch was updating.
    """
    if len(train) == 0:
        raise ValueError("cannot train on an empty dataset")
    index = index or FeatureIndex.from_dataset(train)
    indptr, indices, data, y = design_matrix(train, index)
    rng = np.random.default_rng(cfg.seed)
    model = FmModel(0.0, np.zeros(index.dimension), rng.normal(0.0, cfg.init_stddev, (index.dimension, cfg.k)))
    w0 = np.array([model.w0])
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(y))
        sq = _sgd_epoch(indptr, indices, data, y, order, w0, model.w, model.V, cfg.learning_rate, cfg.l2_reg)
        model.w0 = float(w0[0])
        if not np.isfinite(sq) or not model.is_finite():
            raise DivergenceError(epoch)
        if callback is not None:
            callback(epoch, model, sq / len(y))
    return model
