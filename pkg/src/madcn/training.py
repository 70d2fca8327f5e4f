"""Loss, optimizers, the mini-batch loop and split evaluation."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import TextIO

import numpy as np

from .errors import ArgumentError, DivergenceError, ShapeError
from .features import Dataset, SplitIndices
from .metrics import MetricTriple, metric_triple
from .network import MadcnModel

EVAL_CHUNK = 4096


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 256
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    early_stop_patience: int = 20
    validation_fraction: float = 0.1
    optimizer: str = "adam"
    noise_seed: int | None = None

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ArgumentError("epochs must be >= 0 and batch_size >= 1")
        if not self.learning_rate >= 0:
            raise ArgumentError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1) or self.adam_eps <= 0:
            raise ArgumentError("Adam betas must lie in (0, 1) and eps must be positive")
        if self.early_stop_patience < 0:
            raise ArgumentError("early_stop_patience must be >= 0")
        if not 0 <= self.validation_fraction < 0.5:
            raise ArgumentError(f"validation_fraction must be in [0, 0.5), got {self.validation_fraction}")
        if self.optimizer not in ("adam", "sgd"):
            raise ArgumentError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")


def mse_loss(pred, target) -> float:
    """Per-sample squared error summed over targets, averaged over the batch."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} does not match target shape {target.shape}")
    pred = pred.reshape(pred.shape[0], -1) if pred.ndim else pred.reshape(1, 1)
    target = target.reshape(pred.shape)
    return float(np.sum((target - pred) ** 2) / pred.shape[0])


def mse_loss_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    return 2.0 * (pred - target) / pred.shape[0]


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              cfg: TrainConfig) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
    return params, state


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> dict[str, np.ndarray]:
    for name, p in params.items():
        p -= lr * grads[name]
    return params


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float | None = None


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    train_metrics: dict[str, MetricTriple] = field(default_factory=dict)
    test_metrics: dict[str, MetricTriple] = field(default_factory=dict)
    best_epoch: int | None = None
    stopped_early: bool = False
    wall_clock_seconds: float = 0.0
    seed: int = 0
    model_seed: int = 0
    n_train: int = 0
    n_val: int = 0
    n_test: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train_metrics"] = {k: v.to_dict() for k, v in self.train_metrics.items()}
        d["test_metrics"] = {k: v.to_dict() for k, v in self.test_metrics.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def predict_rows(model: MadcnModel, ds: Dataset, rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64)
    out = np.empty((rows.size, ds.schema.t))
    for lo in range(0, rows.size, EVAL_CHUNK):
        r = rows[lo:lo + EVAL_CHUNK]
        out[lo:lo + r.size] = model.predict(ds.dense[r], ds.sparse_codes[r])
    return out


def evaluate(model, ds: Dataset, rows) -> dict[str, MetricTriple]:
    """MSE / MAE / R^2 per target over ``rows``, predicting in inference mode.

    ``model`` may be a :class:`MadcnModel` or any object exposing
    ``predict_dataset(ds, rows)``.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ArgumentError("evaluate needs at least one row")
    if hasattr(model, "predict_dataset"):
        pred = model.predict_dataset(ds, rows)
    else:
        pred = predict_rows(model, ds, rows)
    y = ds.targets[rows]
    return {name: metric_triple(y[:, j], pred[:, j]) for j, name in enumerate(ds.schema.target_fields)}


def _scaled_loss(model: MadcnModel, ds: Dataset, rows: np.ndarray) -> float:
    pred = predict_rows(model, ds, rows)
    ts = model.target_scaler
    return mse_loss(ts.transform(pred), ts.transform(ds.targets[rows]))


def train(model: MadcnModel, ds: Dataset, split: SplitIndices, cfg: TrainConfig,
          progress: TextIO | None = None) -> tuple[MadcnModel, TrainReport]:
    """Fit a copy of ``model`` on ``split.train``; the input model is untouched.

    The loss is the squared error in target-scaler units (identical to raw
    MSE when the scaler is the identity).  With ``validation_fraction > 0`` a
    holdout is carved from the training rows; with a positive patience the
    best-validation parameters are restored at the end.
    """
    if ds.schema != model.schema:
        raise ArgumentError("dataset schema does not match the model schema")
    train_rows = np.asarray(split.train, dtype=np.int64)
    if train_rows.size == 0:
        raise ArgumentError("training split is empty")
    started = time.perf_counter()
    model = model.copy()
    holdout_seq, shuffle_seq, noise_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    noise_rng = np.random.default_rng(noise_seq if cfg.noise_seed is None else cfg.noise_seed)

    fit_rows, val_rows = train_rows, np.empty(0, dtype=np.int64)
    n_val = int(math.floor(cfg.validation_fraction * train_rows.size))
    if n_val >= 1 and n_val < train_rows.size:
        perm = np.random.default_rng(holdout_seq).permutation(train_rows)
        val_rows, fit_rows = perm[:n_val], perm[n_val:]

    ts = model.target_scaler
    y_scaled = ts.transform(ds.targets)
    report = TrainReport(seed=cfg.seed, model_seed=model.seed, n_train=int(fit_rows.size),
                         n_val=int(val_rows.size), n_test=int(np.size(split.test)))
    state = AdamState.zeros_like(model.params)
    best_val, best_state, since_best = math.inf, None, 0
    if progress is not None and cfg.epochs:
        print("epoch,train_loss,val_loss", file=progress)

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(fit_rows)
        total = 0.0
        for b, lo in enumerate(range(0, order.size, cfg.batch_size)):
            rows = order[lo:lo + cfg.batch_size]
            pred, cache = model.forward(ds.dense[rows], ds.sparse_codes[rows], "train", noise_rng)
            pred_s = ts.transform(pred)
            loss = mse_loss(pred_s, y_scaled[rows])
            if not math.isfinite(loss):
                raise DivergenceError(epoch, b, loss)
            grad = mse_loss_grad(pred_s, y_scaled[rows]) * ts.scale
            _, grads = model.backward(cache, grad)
            if cfg.optimizer == "adam":
                adam_step(model.params, grads, state, cfg)
            else:
                sgd_step(model.params, grads, cfg.learning_rate)
            total += loss * rows.size
        rec = EpochRecord(epoch, total / order.size)
        if val_rows.size:
            rec.val_loss = _scaled_loss(model, ds, val_rows)
            if not math.isfinite(rec.val_loss):
                raise DivergenceError(epoch, -1, rec.val_loss)
        report.epochs.append(rec)
        if progress is not None:
            val = "" if rec.val_loss is None else repr(rec.val_loss)
            print(f"{epoch},{rec.train_loss!r},{val}", file=progress, flush=True)
        if val_rows.size and cfg.early_stop_patience:
            if rec.val_loss < best_val:
                best_val, best_state, since_best = rec.val_loss, model.state(), 0
                report.best_epoch = epoch
            else:
                since_best += 1
                if since_best >= cfg.early_stop_patience:
                    report.stopped_early = True
                    break

    if best_state is not None:
        model.load_state(best_state)
    report.train_metrics = evaluate(model, ds, train_rows)
    if np.size(split.test):
        report.test_metrics = evaluate(model, ds, split.test)
    report.wall_clock_seconds = time.perf_counter() - started
    return model, report
