"""Regression metrics: MSE, MAE and R^2."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ArgumentError, DegenerateTargetError


@dataclass(frozen=True)
class MetricTriple:
    mse: float
    mae: float
    r2: float

    def to_dict(self) -> dict:
        return asdict(self)


def _pair(y, yhat):
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise ArgumentError(f"length mismatch: {y.size} targets vs {yhat.size} predictions")
    if y.size == 0:
        raise ArgumentError("metrics need at least one sample")
    return y, yhat


def mse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean((y - yhat) ** 2))


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def r2(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    if y.size < 2:
        raise ArgumentError("R^2 needs at least two samples")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise DegenerateTargetError("R^2 is undefined for a target with zero variance")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


def metric_triple(y, yhat) -> MetricTriple:
    return MetricTriple(mse(y, yhat), mae(y, yhat), r2(y, yhat))
