import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from madcn.errors import EvaluationError, ShapeError
from madcn.network import CrossLayer, gradient_suite
from madcn.numcore import glorot_uniform, grad_check, matmul, softmax_backward, softmax_rows


def test_matmul_hand_values():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(np.eye(2), a), a)
    assert np.array_equal(matmul(a, [[5.0], [6.0]]), [[17.0], [39.0]])
    assert np.array_equal(matmul(np.zeros((2, 2)), np.ones((2, 3))), np.zeros((2, 3)))


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match="2x3.*2x3"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_softmax_examples():
    assert np.allclose(softmax_rows([[0.0, 0.0, 0.0]]), 1 / 3)
    got = softmax_rows([[np.log(1), np.log(2), np.log(3)]])
    assert np.allclose(got, [[1 / 6, 2 / 6, 3 / 6]], atol=1e-15)
    big = softmax_rows([[1000.0, 0.0, 0.0]])
    assert np.all(np.isfinite(big))
    assert big[0, 0] == pytest.approx(1.0) and big[0, 1] < 1e-300


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)),
              elements=st.floats(-500, 500)))
def test_softmax_rows_are_stochastic(m):
    p = softmax_rows(m)
    assert np.all(p >= 0)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 4, elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_softmax_shift_invariant(row, c):
    assert np.allclose(softmax_rows(row[None]), softmax_rows(row[None] + c), atol=1e-12)


def test_softmax_backward_matches_finite_difference():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(2, 5))
    g = rng.normal(size=(2, 5))
    p = softmax_rows(z)
    analytic = softmax_backward(p, g)
    eps = 1e-6
    numeric = np.zeros_like(z)
    for idx in np.ndindex(z.shape):
        zp, zm = z.copy(), z.copy()
        zp[idx] += eps
        zm[idx] -= eps
        numeric[idx] = (np.sum(softmax_rows(zp) * g) - np.sum(softmax_rows(zm) * g)) / (2 * eps)
    assert np.allclose(analytic, numeric, atol=1e-8)


def test_glorot_bounds():
    w = glorot_uniform(np.random.default_rng(0), (40, 60), 40, 60)
    limit = np.sqrt(6.0 / 100)
    assert w.shape == (40, 60)
    assert np.all(np.abs(w) <= limit)
    assert w.std() == pytest.approx(limit / np.sqrt(3), rel=0.05)


class Linear:
    def __init__(self, W):
        self.W = W

    def forward(self, x):
        return x @ self.W.T, x

    def backward(self, cache, grad):
        return [grad @ self.W], {}


class Constant:
    def forward(self, x):
        return np.full((x.shape[0], 2), 7.0), None

    def backward(self, cache, grad):
        return [np.zeros((grad.shape[0], 3))], {}


class Broken(Linear):
    def backward(self, cache, grad):
        return [2.0 * grad @ self.W], {}


def test_grad_check_linear():
    rng = np.random.default_rng(1)
    rep = grad_check(Linear(rng.normal(size=(4, 3))), [rng.normal(size=(5, 3))])
    assert rep.max_rel_error < 1e-7
    assert rep.n_coordinates == 15


def test_grad_check_constant_is_exact_zero():
    rep = grad_check(Constant(), [np.ones((2, 3))])
    assert rep.max_rel_error == 0.0


def test_grad_check_flags_wrong_backward():
    rng = np.random.default_rng(1)
    rep = grad_check(Broken(rng.normal(size=(4, 3))), [rng.normal(size=(5, 3))], op_name="broken")
    assert not rep.passed(1e-5)
    assert rep.max_rel_error == pytest.approx(1 / 2, rel=1e-4)
    assert rep.op_name == "broken"


def test_grad_check_cross_layer_random_point():
    rng = np.random.default_rng(5)
    layer = CrossLayer(rng.normal(size=6), 0.3)
    rep = grad_check(layer, [rng.normal(size=(3, 6)), rng.normal(size=(3, 6))])
    assert rep.max_rel_error < 1e-5


def test_grad_check_rejects_bad_eps():
    with pytest.raises(ValueError):
        grad_check(Constant(), [np.ones((1, 3))], eps=0.1)


def test_grad_check_non_finite_output():
    class Inf(Constant):
        def forward(self, x):
            return np.full((1, 1), np.inf), None

    with pytest.raises(EvaluationError):
        grad_check(Inf(), [np.ones((1, 3))])


def test_parameters_restored_after_check():
    for name, transform, inputs in gradient_suite(seed=2):
        before = {k: v.copy() for k, v in getattr(transform, "params", {}).items()}
        grad_check(transform, inputs)
        for k, v in before.items():
            assert np.array_equal(transform.params[k], v), (name, k)
