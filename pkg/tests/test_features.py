import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from madcn.errors import EncodingError, InputError, SchemaError
from madcn.features import (FeatureSchema, apply_standardizer, carbon_panel_schema, fit_standardizer,
                            fit_target_scaler, ingest_csv, load_schema, save_schema, split, write_csv)
from madcn.synthetic import make_interaction_dataset

SCHEMA = FeatureSchema(dense_fields=[("gdp", "yuan"), ("pop", "")], sparse_fields=[("city_id", 3)],
                       target_fields=["co2"], id_field="city_id", time_field="year")


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_three_row_fixture(tmp_path):
    p = write(tmp_path, "city_id,year,gdp,pop,co2\nA,2010,1.5,2,10\nB,2010,2.5,3,11\nA,2011,3,4,12\n")
    ds = ingest_csv(p, SCHEMA)
    assert ds.n_rows == 3
    assert set(ds.sparse_codes[:, 0]) == {0, 1}
    assert ds.category_maps == {"city_id": ["A", "B"]}
    assert ds.row_keys == [("A", "2010"), ("B", "2010"), ("A", "2011")]
    assert np.array_equal(ds.dense, [[1.5, 2], [2.5, 3], [3, 4]])


def test_na_row_dropped(tmp_path):
    p = write(tmp_path, "city_id,year,gdp,pop,co2\nA,2010,NA,2,10\nB,2010,2.5,3,11\n")
    ds = ingest_csv(p, SCHEMA)
    assert ds.n_rows == 1
    assert ds.ingest_log.rows_dropped == 1
    assert ds.ingest_log.dropped["dense:gdp"] == 1


def test_missing_target_column(tmp_path):
    p = write(tmp_path, "city_id,year,gdp,pop\nA,2010,1,2\n")
    with pytest.raises(SchemaError, match="co2"):
        ingest_csv(p, SCHEMA)


def test_missing_file_names_path(tmp_path):
    with pytest.raises(InputError, match="nope.csv"):
        ingest_csv(tmp_path / "nope.csv", SCHEMA)


def test_cardinality_overflow(tmp_path):
    p = write(tmp_path, "city_id,year,gdp,pop,co2\n" + "".join(f"C{i},2010,1,2,3\n" for i in range(4)))
    with pytest.raises(EncodingError):
        ingest_csv(p, SCHEMA)


def test_category_maps_reused(tmp_path):
    p = write(tmp_path, "city_id,year,gdp,pop,co2\nB,2010,1,2,3\n")
    ds = ingest_csv(p, SCHEMA, {"city_id": ["A", "B"]})
    assert ds.sparse_codes[0, 0] == 1


def test_csv_round_trip(tmp_path):
    ds = make_interaction_dataset(30, seed=4, n_years=3)
    write_csv(ds, tmp_path / "x.csv")
    back = ingest_csv(tmp_path / "x.csv", ds.schema, ds.category_maps)
    assert np.array_equal(back.dense, ds.dense)
    assert np.array_equal(back.targets, ds.targets)
    assert np.array_equal(back.sparse_codes, ds.sparse_codes)


def test_schema_round_trip(tmp_path):
    s = carbon_panel_schema()
    save_schema(s, tmp_path / "s.json")
    assert load_schema(tmp_path / "s.json") == s
    assert s.n == 2 and s.cardinalities == (275, 13)


def test_schema_validation():
    with pytest.raises(Exception):
        FeatureSchema(dense_fields=[("a", ""), ("a", "")], sparse_fields=[], target_fields=["y"])
    with pytest.raises(Exception):
        FeatureSchema(dense_fields=[("a", "")], sparse_fields=[("c", 0)], target_fields=["y"])


def test_standardizer_hand_values():
    ds = make_interaction_dataset(2, seed=0)
    ds.dense[:] = [[2, 1, 0], [2, 3, 0]]
    st_ = fit_standardizer(ds, [0, 1])
    assert st_.mu[0] == 2 and bool(st_.constant[0])
    assert st_.mu[1] == 2 and st_.sigma[1] == 1
    z = st_.transform(ds.dense)
    assert np.array_equal(z[:, 1], [-1, 1])
    assert np.array_equal(z[:, 0], [0, 0])
    assert st_.transform(st_.mu)[1] == 0 and st_.transform(st_.mu + st_.sigma)[1] == 1


def test_standardizer_uses_train_rows_only():
    ds = make_interaction_dataset(10, seed=0)
    st_ = fit_standardizer(ds, [0, 1, 2])
    assert np.allclose(st_.mu, ds.dense[:3].mean(axis=0))


def test_apply_standardizer_schema_check():
    ds = make_interaction_dataset(10, seed=0)
    other = make_interaction_dataset(10, seed=0)
    stats = fit_standardizer(other, range(10))
    assert np.allclose(apply_standardizer(ds, stats).dense.mean(axis=0), 0, atol=1e-12)
    bad = type(stats)(("a", "b", "c"), stats.mu, stats.sigma, stats.constant)
    with pytest.raises(SchemaError):
        apply_standardizer(ds, bad)


def test_target_scaler_population_std():
    ds = make_interaction_dataset(5, seed=0)
    ts = fit_target_scaler(ds, range(5))
    assert ts.sigma[0] == pytest.approx(np.std(ds.targets[:, 0]))


def test_split_sizes():
    s = split(41_449, 0.75, seed=0)
    assert (s.train.size, s.test.size) == (31_086, 10_363)
    for seed in range(5):
        s = split(4, 0.75, seed)
        assert (s.train.size, s.test.size) == (3, 1)


def test_split_deterministic():
    a, b = split(100, 0.75, 9), split(100, 0.75, 9)
    assert np.array_equal(a.train, b.train) and np.array_equal(a.test, b.test)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 5000), st.floats(0.05, 0.95), st.integers(0, 2**32 - 1))
def test_split_partitions(n, ratio, seed):
    s = split(n, ratio, seed)
    both = np.concatenate([s.train, s.test])
    assert np.array_equal(np.sort(both), np.arange(n))
    assert s.train.size == int(np.floor(ratio * n + 1e-9))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40))
def test_standardized_train_moments(values):
    ds = make_interaction_dataset(len(values), seed=0)
    ds.dense[:, 0] = values
    stats = fit_standardizer(ds, range(len(values)))
    z = stats.transform(ds.dense)[:, 0]
    if stats.constant[0]:
        assert np.all(z == 0)
    elif stats.sigma[0] > 1e-6:
        assert abs(z.mean()) < 1e-9
        assert z.std() == pytest.approx(1.0, rel=1e-9)
