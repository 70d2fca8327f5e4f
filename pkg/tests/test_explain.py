from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from madcn.errors import ArgumentError, CapacityError
from madcn.explain import (BackgroundSet, Explanation, coalition_value, dependence_export, force_record,
                           importance_summary, read_explanations_csv, sample_background, shap_exact,
                           shap_permutation, write_explanations_csv)
from madcn.features import split
from madcn.network import Hyperparams, build_model
from madcn.synthetic import make_interaction_dataset
from oracles import brute_force_shapley, five_feature_model, three_feature_model


def linear(w):
    w = np.asarray(w, dtype=float)
    return lambda X: np.asarray(X) @ w


def expl(phi, names=("f1", "f2")):
    return Explanation(0.0, np.array(phi, dtype=float), float(sum(phi)), "exact", 0, names, np.zeros(len(phi)))


def test_coalition_values():
    f = linear([2.0, 3.0])
    bg = BackgroundSet(np.array([[0.0, 0.0]]))
    x = np.array([1.0, 1.0])
    assert coalition_value(f, x, {0}, bg) == 2.0
    assert coalition_value(f, x, {0, 1}, bg) == 5.0
    bg2 = BackgroundSet(np.array([[0.0, 1.0], [2.0, 3.0]]))
    assert coalition_value(f, x, set(), bg2) == pytest.approx(np.mean(f(bg2.rows)))


def test_linear_two_feature():
    e = shap_exact(linear([2.0, 3.0]), [1.0, 1.0], BackgroundSet(np.zeros((1, 2))))
    assert np.allclose(e.phi, [2.0, 3.0], atol=1e-15)
    assert e.phi0 == 0.0 and e.fx == 5.0


def test_axioms_and_oracle():
    rng = np.random.default_rng(0)
    bg = BackgroundSet(rng.normal(size=(6, 3)))
    for _ in range(10):
        v = rng.normal()
        x = np.array([v, v, rng.normal()])
        e = shap_exact(three_feature_model, x, bg)
        assert e.efficiency_gap < 1e-8
        assert e.phi[2] == 0.0
        phi, phi0 = brute_force_shapley(three_feature_model, x, bg.rows)
        assert np.allclose(e.phi, phi, atol=1e-10)
        assert e.phi0 == pytest.approx(phi0, abs=1e-10)


def test_symmetric_features_equal():
    bg = BackgroundSet(np.array([[0.2, 0.2, 1.0], [-1.0, -1.0, 0.0]]))
    e = shap_exact(three_feature_model, [0.7, 0.7, 3.0], bg)
    assert abs(e.phi[0] - e.phi[1]) < 1e-10


def test_permutation_all_orders_matches_exact():
    rng = np.random.default_rng(1)
    bg = BackgroundSet(rng.normal(size=(5, 3)))
    x = rng.normal(size=3)
    exact = shap_exact(three_feature_model, x, bg)
    perm = shap_permutation(three_feature_model, x, bg, permutations=list(permutations(range(3))))
    assert np.allclose(perm.phi, exact.phi, atol=1e-10)
    assert perm.n_permutations == 6


def test_permutation_seeded_and_linear():
    rng = np.random.default_rng(2)
    bg5 = BackgroundSet(rng.normal(size=(4, 5)))
    x5 = rng.normal(size=5)
    a = shap_permutation(five_feature_model, x5, bg5, n_perm=1, seed=7)
    b = shap_permutation(five_feature_model, x5, bg5, n_perm=1, seed=7)
    assert np.array_equal(a.phi, b.phi)
    bg = BackgroundSet(rng.normal(size=(4, 4)))
    x = rng.normal(size=4)
    f = linear([1.0, -2.0, 0.5, 4.0])
    one = shap_permutation(f, x, bg, n_perm=1, seed=3)
    assert np.allclose(one.phi, shap_exact(f, x, bg).phi, atol=1e-12)


def test_permutation_rerun_identical():
    rng = np.random.default_rng(4)
    bg = BackgroundSet(rng.normal(size=(8, 5)))
    x = rng.normal(size=5)
    a = shap_permutation(five_feature_model, x, bg, n_perm=3, seed=11)
    b = shap_permutation(five_feature_model, x, bg, n_perm=3, seed=11)
    assert np.array_equal(a.phi, b.phi)
    assert a.efficiency_gap < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6))
def test_efficiency_property(seed, n):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=n)
    f = lambda X: np.tanh(np.asarray(X) @ w) + np.asarray(X)[:, 0] ** 2
    bg = BackgroundSet(rng.normal(size=(3, n)))
    x = rng.normal(size=n)
    e = shap_exact(f, x, bg)
    assert e.efficiency_gap < 1e-8
    p = shap_permutation(f, x, bg, n_perm=5, seed=seed)
    assert p.efficiency_gap < 1e-8


def test_linear_closed_form_property():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = rng.integers(1, 8)
        w = rng.normal(size=n)
        b = rng.normal(size=n)
        x = rng.normal(size=n)
        e = shap_exact(linear(w), x, BackgroundSet(b[None, :]))
        assert np.allclose(e.phi, w * (x - b), atol=1e-10)


def test_capacity_limit():
    f = lambda X: np.asarray(X).sum(axis=1)
    with pytest.raises(CapacityError, match="permutation"):
        shap_exact(f, np.zeros(21), BackgroundSet(np.zeros((1, 21))))
    e = shap_permutation(f, np.ones(21), BackgroundSet(np.zeros((1, 21))), n_perm=2)
    assert np.allclose(e.phi, 1.0)


def test_subset_of_features_pins_others():
    f = linear([1.0, 2.0, 3.0])
    bg = BackgroundSet(np.zeros((1, 3)))
    e = shap_exact(f, [1.0, 1.0, 1.0], bg, features=[0, 2])
    assert np.allclose(e.phi, [1.0, 3.0])
    assert e.phi0 == 2.0 and e.efficiency_gap == 0.0
    with pytest.raises(ArgumentError):
        shap_exact(f, [1.0, 1.0, 1.0], bg, features=[0, 0])


def test_importance_examples():
    assert importance_summary([expl([-2.0, 1.0])]) == [("f1", 2.0), ("f2", 1.0)]
    assert importance_summary([expl([1.0, 0.0]), expl([-3.0, 0.0])]) == [("f1", 2.0), ("f2", 0.0)]
    assert importance_summary([expl([0.0, 0.0], ("b", "a"))]) == [("a", 0.0), ("b", 0.0)]


def test_force_record():
    rec = force_record(expl([0.5, -2.0]))
    assert [(n, d) for n, _, d in rec.entries] == [("f2", "-"), ("f1", "+")]
    rec = force_record(expl([0.0, 0.0], ("z", "a")))
    assert [(n, d) for n, _, d in rec.entries] == [("a", "0"), ("z", "0")]


def test_force_record_largest_positive_first():
    names = ("GDP", "AI Technology Level", "Population", "Green Finance")
    rec = force_record(expl([0.4, 2.5, -1.1, 0.2], names))
    assert rec.entries[0][0] == "AI Technology Level" and rec.entries[0][2] == "+"


def test_dependence_records():
    exps = []
    for k, x in enumerate([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]):
        e = shap_exact(lambda X: np.asarray(X)[:, 0] * np.asarray(X)[:, 1], x,
                       BackgroundSet(np.array([[0.5, 0.5], [-0.5, -0.5]])), sample_key=(f"s{k}", ""))
        exps.append(e)
    recs = dependence_export(exps, "x1", "x2")
    assert [r.sample_key for r in recs] == [("s0", ""), ("s1", ""), ("s2", ""), ("s3", "")]
    for r in recs:
        # v(empty) = 0.25 and v({i}) = 0, so phi_1 = (x1*x2 - 0.25) / 2, which has the sign of x1*x2 = +-1
        assert np.sign(r.shap_value) == np.sign(r.feature_value * r.color_feature_value)
    same = dependence_export(exps[:3], "x1", "x1")
    assert len(same) == 3 and all(r.feature_value == r.color_feature_value for r in same)
    with pytest.raises(ArgumentError):
        dependence_export(exps, "x1", "x9")


def test_model_explanation_and_csv(tmp_path):
    ds = make_interaction_dataset(60, seed=0, n_years=3)
    model = build_model(ds.schema, Hyperparams(embed_dim=2, cross_layers=1, deep_units=(4,), heads=1, d_model=2,
                                               d_k=2), seed=0, category_maps=ds.category_maps)
    sp = split(ds.n_rows, 0.75, 0)
    bg = sample_background(ds, sp.train, 10, seed=1)
    X = ds.features()
    exps = [shap_exact(model, X[r], bg, sample_key=ds.row_keys[r]) for r in sp.test[:4]]
    for e in exps:
        assert e.feature_names == ("x1", "x2", "x3", "year")
        assert e.efficiency_gap < 1e-8
    write_explanations_csv(exps, tmp_path / "e.csv", ds.category_maps)
    back = read_explanations_csv(tmp_path / "e.csv")
    assert len(back) == len({e.sample_key for e in exps})
    assert np.array_equal(back[0].phi, exps[0].phi)
    assert back[0].feature_values[3] in (2009.0, 2010.0, 2011.0)
