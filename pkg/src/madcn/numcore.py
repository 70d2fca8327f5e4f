"""Float64 matrix helpers and the forward/backward contract.

Every differentiable piece of the network is an object with

* ``params``: an ordered ``dict`` of name -> float64 array (may be empty),
* ``forward(*inputs) -> (output, cache)``,
* ``backward(cache, grad_output) -> (input_grads, param_grads)``.

``input_grads`` is a list aligned with ``inputs`` (``None`` for integer
inputs such as category codes) and ``param_grads`` maps the same keys as
``params``.  Forward passes never mutate the transform, so inference is safe
to run from several threads; the cache is what backward consumes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Protocol, Sequence

import numpy as np

from .errors import EvaluationError, ShapeError

DTYPE = np.float64


class Transform(Protocol):
    params: dict[str, np.ndarray]

    def forward(self, *inputs: np.ndarray) -> tuple[np.ndarray, Any]: ...

    def backward(
        self, cache: Any, grad_output: np.ndarray
    ) -> tuple[list[np.ndarray | None], dict[str, np.ndarray]]: ...


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    m = np.asarray(x, dtype=DTYPE)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def softmax_rows(m) -> np.ndarray:
    """Softmax along the last axis, shifted by the row max for stability."""
    m = np.asarray(m, dtype=DTYPE)
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(probs: np.ndarray, grad: np.ndarray) -> np.ndarray:
    return probs * (grad - np.sum(grad * probs, axis=-1, keepdims=True))


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(DTYPE)


@dataclass(frozen=True)
class GradCheckReport:
    op_name: str
    max_rel_error: float
    worst_coordinate: tuple  # (tensor label, index within that tensor)
    n_coordinates: int

    def passed(self, tol: float = 1e-5) -> bool:
        return self.max_rel_error < tol


def _probe(transform: Transform, inputs: Sequence[np.ndarray]) -> float:
    out, _ = transform.forward(*inputs)
    value = float(np.sum(out))
    if not np.isfinite(value):
        raise EvaluationError("forward pass produced a non-finite output")
    return value


def grad_check(transform: Transform, inputs: Sequence, eps: float = 1e-5,
               op_name: str | None = None) -> GradCheckReport:
    """Compare analytic gradients of ``sum(forward(*inputs))`` with central differences.

    Every float input coordinate and every parameter coordinate is perturbed.
    Integer inputs are treated as non-differentiable and skipped.  Relative
    error uses the denominator ``max(|analytic|, |numeric|, 1e-8)``.
    """
    if not 0.0 < eps <= 1e-2:
        raise ValueError(f"eps must lie in (0, 1e-2], got {eps}")
    inputs = [np.array(x, copy=True) for x in inputs]
    out, cache = transform.forward(*inputs)
    if not np.all(np.isfinite(out)):
        raise EvaluationError("forward pass produced a non-finite output")
    input_grads, param_grads = transform.backward(cache, np.ones_like(out))

    targets: list[tuple[str, np.ndarray, np.ndarray]] = []
    for i, (x, g) in enumerate(zip(inputs, input_grads)):
        if np.issubdtype(x.dtype, np.floating):
            targets.append((f"input{i}", x, np.asarray(g)))
    for name, p in getattr(transform, "params", {}).items():
        targets.append((name, p, np.asarray(param_grads[name])))

    worst = 0.0
    worst_at: tuple = ("", ())
    count = 0
    for label, arr, analytic in targets:
        if analytic.shape != arr.shape:
            raise ShapeError(f"gradient for {label} has shape {analytic.shape}, expected {arr.shape}")
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            f_plus = _probe(transform, inputs)
            arr[idx] = orig - eps
            f_minus = _probe(transform, inputs)
            arr[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(analytic[idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            count += 1
            if err > worst:
                worst, worst_at = err, (label, idx)
    return GradCheckReport(op_name or type(transform).__name__, worst, worst_at, count)
