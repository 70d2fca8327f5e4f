"""Synthetic panels with a known generator, used for fixtures and benchmarks."""

from __future__ import annotations

import numpy as np

from .features import Dataset, FeatureSchema


def interaction_schema(n_years: int = 0) -> FeatureSchema:
    """x1..x3 dense; optionally an irrelevant ``year`` field embedded as sparse."""
    sparse = [("year", n_years)] if n_years else []
    return FeatureSchema(
        dense_fields=[("x1", ""), ("x2", ""), ("x3", "")],
        sparse_fields=sparse,
        target_fields=["y"],
        id_field="city_id",
        time_field="year",
    )


def make_interaction_dataset(n_rows: int = 4000, seed: int = 0, noise_var: float = 0.01,
                             n_years: int = 0) -> Dataset:
    """Rows of y = 3 x1 + 2 x2 x3 + N(0, noise_var) with x ~ U(-1, 1)."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(n_rows, 3))
    y = 3.0 * x[:, 0] + 2.0 * x[:, 1] * x[:, 2] + rng.normal(0.0, np.sqrt(noise_var), size=n_rows)
    schema = interaction_schema(n_years)
    years = rng.integers(0, n_years, size=n_rows) if n_years else np.zeros(n_rows, dtype=np.int64)
    keys = [(f"c{i:05d}", str(2009 + int(years[i]))) for i in range(n_rows)]
    codes = years.reshape(n_rows, 1) if n_years else np.zeros((n_rows, 0), dtype=np.int64)
    maps = {"year": [str(2009 + k) for k in range(n_years)]} if n_years else {}
    return Dataset(schema, x, codes, y.reshape(-1, 1), keys, maps)
