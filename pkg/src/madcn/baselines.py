"""Reference regressors: ridge/OLS, k-nearest neighbours and network ablations.

LR and KNN see standardized dense fields plus one-hot sparse fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import read_container, write_container
from .errors import ArgumentError, FormatError, ShapeError, SingularityError
from .features import Dataset, FeatureSchema, StandardizerStats, fit_standardizer
from .network import Hyperparams, MadcnModel, with_variant

LINEAR_MAGIC = b"LINR1"
KNN_MAGIC = b"KNNR1"
ABLATIONS = ("dnn_only", "dcn_no_attention")
KNN_CHUNK = 512


def design_matrix(ds: Dataset, stats: StandardizerStats, rows=None) -> np.ndarray:
    """Standardized dense block followed by a one-hot block per sparse field."""
    if rows is None:
        rows = np.arange(ds.n_rows)
    rows = np.asarray(rows, dtype=np.int64)
    blocks = [stats.transform(ds.dense[rows])]
    for j, card in enumerate(ds.schema.cardinalities):
        onehot = np.zeros((rows.size, card))
        onehot[np.arange(rows.size), ds.sparse_codes[rows, j]] = 1.0
        blocks.append(onehot)
    return np.hstack(blocks) if blocks else np.zeros((rows.size, 0))


@dataclass
class LinearModel:
    weights: np.ndarray  # (D, t)
    intercept: np.ndarray  # (t,)
    ridge_lambda: float = 0.0

    def predict(self, features) -> np.ndarray:
        return np.asarray(features, dtype=np.float64) @ self.weights + self.intercept


def fit_linear(features, targets, ridge_lambda: float = 1e-6) -> LinearModel:
    """Solve (X'X + lambda I) w = X'y with an unpenalized intercept column.

    Solved as the equivalent augmented least-squares problem, which avoids
    squaring the condition number.
    """
    if ridge_lambda < 0:
        raise ArgumentError(f"ridge_lambda must be >= 0, got {ridge_lambda}")
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    single = y.ndim == 1
    y = y.reshape(X.shape[0], -1)
    n, D = X.shape
    A = np.hstack([np.ones((n, 1)), X])
    if ridge_lambda > 0:
        penalty = np.hstack([np.zeros((D, 1)), np.sqrt(ridge_lambda) * np.eye(D)])
        A = np.vstack([A, penalty])
        y = np.vstack([y, np.zeros((D, y.shape[1]))])
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < D + 1:
        raise SingularityError(
            f"design matrix has rank {rank} < {D + 1}; use ridge_lambda > 0 to regularize")
    w = coef[1:]
    b = coef[0]
    return LinearModel(w[:, 0:1] if single else w, b[0:1] if single else b, float(ridge_lambda))


@dataclass
class KnnModel:
    k: int
    train_features: np.ndarray
    train_targets: np.ndarray
    distance: str = "euclidean"

    def __post_init__(self):
        self.train_features = np.asarray(self.train_features, dtype=np.float64)
        self.train_targets = np.asarray(self.train_targets, dtype=np.float64).reshape(len(self.train_features), -1)
        if not 1 <= self.k <= len(self.train_features):
            raise ArgumentError(f"k={self.k} must lie in [1, {len(self.train_features)}]")
        if self.distance != "euclidean":
            raise ArgumentError(f"unsupported distance {self.distance!r}")


def _nearest(d: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest entries; equal distances resolved by lower index."""
    if k == d.size:
        return np.arange(d.size)
    kth = np.partition(d, k - 1)[k - 1]
    below = np.flatnonzero(d < kth)
    tied = np.flatnonzero(d == kth)[: k - below.size]
    return np.concatenate([below, tied])


def knn_predict(model: KnnModel, query) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    single = q.ndim == 1
    q = q.reshape(-1, model.train_features.shape[1]) if q.size else q.reshape(0, model.train_features.shape[1])
    if q.shape[1] != model.train_features.shape[1]:
        raise ShapeError(f"query width {q.shape[1]} != stored width {model.train_features.shape[1]}")
    X = model.train_features
    x_sq = np.sum(X * X, axis=1)
    out = np.empty((q.shape[0], model.train_targets.shape[1]))
    for lo in range(0, q.shape[0], KNN_CHUNK):
        qc = q[lo:lo + KNN_CHUNK]
        d = x_sq[None, :] - 2.0 * (qc @ X.T) + np.sum(qc * qc, axis=1)[:, None]
        np.maximum(d, 0.0, out=d)
        for i in range(qc.shape[0]):
            out[lo + i] = model.train_targets[_nearest(d[i], model.k)].mean(axis=0)
    return out[0] if single else out


class LinearBaseline:
    """LR on the one-hot design matrix; fits its own scaler on the training rows."""

    name = "LR"

    def __init__(self, schema: FeatureSchema, ridge_lambda: float = 1e-6):
        self.schema = schema
        self.ridge_lambda = ridge_lambda
        self.stats: StandardizerStats | None = None
        self.model: LinearModel | None = None

    def fit(self, ds: Dataset, rows) -> "LinearBaseline":
        self.stats = fit_standardizer(ds, rows)
        self.model = fit_linear(design_matrix(ds, self.stats, rows), ds.targets[np.asarray(rows)], self.ridge_lambda)
        return self

    def predict_dataset(self, ds: Dataset, rows) -> np.ndarray:
        return self.model.predict(design_matrix(ds, self.stats, rows))

    def save(self, path) -> None:
        header = {"schema": self.schema.to_dict(), "standardizer": self.stats.to_dict(),
                  "ridge_lambda": self.ridge_lambda}
        write_container(path, LINEAR_MAGIC, header,
                        {"weights": self.model.weights, "intercept": self.model.intercept})

    @classmethod
    def load(cls, path) -> "LinearBaseline":
        header, arrays = read_container(path, LINEAR_MAGIC)
        try:
            obj = cls(FeatureSchema.from_dict(header["schema"]), header["ridge_lambda"])
            obj.stats = StandardizerStats.from_dict(header["standardizer"])
            obj.model = LinearModel(arrays["weights"], arrays["intercept"], header["ridge_lambda"])
        except KeyError as exc:
            raise FormatError(f"{path}: missing {exc.args[0]!r}") from None
        return obj


class KnnBaseline:
    name = "KNN"

    def __init__(self, schema: FeatureSchema, k: int = 5):
        self.schema = schema
        self.k = k
        self.stats: StandardizerStats | None = None
        self.model: KnnModel | None = None

    def fit(self, ds: Dataset, rows) -> "KnnBaseline":
        rows = np.asarray(rows)
        self.stats = fit_standardizer(ds, rows)
        self.model = KnnModel(min(self.k, rows.size), design_matrix(ds, self.stats, rows), ds.targets[rows])
        return self

    def predict_dataset(self, ds: Dataset, rows) -> np.ndarray:
        return knn_predict(self.model, design_matrix(ds, self.stats, rows))

    def save(self, path) -> None:
        header = {"schema": self.schema.to_dict(), "standardizer": self.stats.to_dict(), "k": self.model.k}
        write_container(path, KNN_MAGIC, header,
                        {"train_features": self.model.train_features, "train_targets": self.model.train_targets})

    @classmethod
    def load(cls, path) -> "KnnBaseline":
        header, arrays = read_container(path, KNN_MAGIC)
        try:
            obj = cls(FeatureSchema.from_dict(header["schema"]), header["k"])
            obj.stats = StandardizerStats.from_dict(header["standardizer"])
            obj.model = KnnModel(header["k"], arrays["train_features"], arrays["train_targets"])
        except KeyError as exc:
            raise FormatError(f"{path}: missing {exc.args[0]!r}") from None
        return obj


def build_ablation(kind: str, schema: FeatureSchema, hyperparams: Hyperparams | None = None,
                   seed: int = 0, **kwargs) -> MadcnModel:
    """``dnn_only``: MLP branch alone.  ``dcn_no_attention``: cross + MLP, no attention.

    Both ablations run without input noise.
    """
    if kind not in ABLATIONS:
        raise ArgumentError(f"unknown ablation {kind!r}; expected one of {ABLATIONS}")
    return MadcnModel(schema, with_variant(hyperparams or Hyperparams(), kind), seed, **kwargs)
