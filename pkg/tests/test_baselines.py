import numpy as np
import pytest

from madcn.baselines import (KnnBaseline, KnnModel, LinearBaseline, build_ablation, design_matrix, fit_linear,
                             knn_predict)
from madcn.errors import ArgumentError, FormatError, SingularityError
from madcn.features import fit_standardizer, split
from madcn.network import Hyperparams, zero_model
from madcn.synthetic import make_interaction_dataset


def test_exact_line():
    x = np.arange(10.0)[:, None]
    lm = fit_linear(x, 2 * x[:, 0] + 1, ridge_lambda=0.0)
    assert lm.weights[0, 0] == pytest.approx(2.0, abs=1e-8)
    assert lm.intercept[0] == pytest.approx(1.0, abs=1e-8)


def test_constant_target_and_ridge_limit():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(30, 3))
    y = rng.normal(size=30) + 4
    lm = fit_linear(x, np.full(30, 7.0), 0.0)
    assert np.allclose(lm.weights, 0, atol=1e-12) and lm.intercept[0] == pytest.approx(7.0)
    big = fit_linear(x, y, 1e12)
    assert np.allclose(big.weights, 0, atol=1e-9)
    assert big.intercept[0] == pytest.approx(y.mean(), abs=1e-9)


def test_ridge_matches_normal_equations():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(40, 4))
    y = x @ [1.0, -2, 0.5, 3] + 0.3 + rng.normal(size=40) * 0.1
    lam = 2.5
    lm = fit_linear(x, y, lam)
    xc = x - x.mean(axis=0)
    w = np.linalg.solve(xc.T @ xc + lam * np.eye(4), xc.T @ (y - y.mean()))
    assert np.allclose(lm.weights[:, 0], w, atol=1e-10)


def test_rank_deficient_without_ridge():
    x = np.ones((5, 2))
    with pytest.raises(SingularityError):
        fit_linear(x, np.arange(5.0), 0.0)
    fit_linear(x, np.arange(5.0), 1e-3)
    with pytest.raises(ArgumentError):
        fit_linear(x, np.arange(5.0), -1.0)


def test_knn_examples():
    X = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    y = np.array([10.0, 20.0, 40.0])
    assert knn_predict(KnnModel(1, X, y), [2.0, 0.0])[0] == 20.0
    assert knn_predict(KnnModel(3, X, y), [9.0, 9.0])[0] == pytest.approx(y.mean())
    assert knn_predict(KnnModel(2, X, y), [0.0, 0.0])[0] == 15.0


def test_knn_ties_lower_index():
    X = np.array([[1.0], [-1.0], [1.0], [-1.0]])
    y = np.array([1.0, 2.0, 3.0, 4.0])
    assert knn_predict(KnnModel(1, X, y), [0.0])[0] == 1.0
    assert knn_predict(KnnModel(3, X, y), [0.0])[0] == pytest.approx(2.0)


def test_knn_against_brute_force():
    rng = np.random.default_rng(2)
    X = rng.integers(-2, 3, size=(50, 3)).astype(float)
    y = rng.normal(size=50)
    q = rng.integers(-2, 3, size=(20, 3)).astype(float)
    got = knn_predict(KnnModel(4, X, y), q)
    for i in range(20):
        d = np.sum((X - q[i]) ** 2, axis=1)
        order = sorted(range(50), key=lambda j: (d[j], j))[:4]
        assert got[i, 0] == pytest.approx(y[order].mean(), abs=1e-14)


def test_design_matrix_one_hot():
    ds = make_interaction_dataset(20, seed=0, n_years=3)
    stats = fit_standardizer(ds, range(20))
    X = design_matrix(ds, stats)
    assert X.shape == (20, 3 + 3)
    assert np.array_equal(X[:, 3:].sum(axis=1), np.ones(20))


def test_baseline_persistence(tmp_path):
    ds = make_interaction_dataset(80, seed=1, n_years=2)
    sp = split(ds.n_rows, 0.75, 0)
    for cls, kw in ((LinearBaseline, {}), (KnnBaseline, {"k": 3})):
        model = cls(ds.schema, **kw).fit(ds, sp.train)
        model.save(tmp_path / cls.name)
        back = cls.load(tmp_path / cls.name)
        assert np.array_equal(back.predict_dataset(ds, sp.test), model.predict_dataset(ds, sp.test))
    with pytest.raises(FormatError):
        KnnBaseline.load(tmp_path / "LR")


def test_lr_misses_interaction():
    ds = make_interaction_dataset(2000, seed=5)
    sp = split(ds.n_rows, 0.75, 0)
    lr = LinearBaseline(ds.schema).fit(ds, sp.train)
    pred = lr.predict_dataset(ds, sp.test)[:, 0]
    y = ds.targets[sp.test, 0]
    r2 = 1 - np.sum((y - pred) ** 2) / np.sum((y - y.mean()) ** 2)
    # var(3 x1) = 3, var(2 x2 x3) = 4/9: linear fit explains about 3 / 3.45
    assert 0.83 < r2 < 0.9


def test_ablations():
    ds = make_interaction_dataset(10, seed=0)
    m = zero_model(build_ablation("dnn_only", ds.schema, Hyperparams(deep_units=(4,)), 0))
    assert np.array_equal(m.predict(ds.dense, ds.sparse_codes), np.zeros((10, 1)))
    m = build_ablation("dnn_only", ds.schema, Hyperparams(deep_units=(4,)), 0)
    assert np.array_equal(m.predict(ds.dense, ds.sparse_codes), m.predict(ds.dense, ds.sparse_codes))
    with pytest.raises(ArgumentError):
        build_ablation("madcn", ds.schema)
