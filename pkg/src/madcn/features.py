"""Feature schema, CSV ingestion, z-score scaling and train/test splitting."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, EncodingError, InputError, SchemaError

MISSING_TOKENS = frozenset({"", "na", "n/a", "nan", "null", "none", "-"})


@dataclass(frozen=True)
class FeatureSchema:
    dense_fields: tuple[tuple[str, str], ...]
    sparse_fields: tuple[tuple[str, int], ...]
    target_fields: tuple[str, ...]
    id_field: str | None = None
    time_field: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "dense_fields", tuple((str(n), str(u)) for n, u in self.dense_fields))
        object.__setattr__(self, "sparse_fields", tuple((str(n), int(c)) for n, c in self.sparse_fields))
        object.__setattr__(self, "target_fields", tuple(str(t) for t in self.target_fields))
        if not self.target_fields:
            raise SchemaError("schema needs at least one target field")
        names = self.dense_names + self.sparse_names + self.target_fields
        dupes = sorted(n for n, c in Counter(names).items() if c > 1)
        if dupes:
            raise SchemaError(f"duplicate field names in schema: {dupes}")
        for name, card in self.sparse_fields:
            if card < 1:
                raise SchemaError(f"sparse field {name!r} has cardinality {card} < 1")
        for key in (self.id_field, self.time_field):
            if key is not None and key in self.dense_names + self.target_fields:
                raise SchemaError(f"key field {key!r} cannot also be a dense or target field")

    @property
    def dense_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.dense_fields)

    @property
    def sparse_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.sparse_fields)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(c for _, c in self.sparse_fields)

    @property
    def feature_names(self) -> tuple[str, ...]:
        """Model input fields in input order: dense block, then sparse block."""
        return self.dense_names + self.sparse_names

    @property
    def m(self) -> int:
        return len(self.dense_fields)

    @property
    def n(self) -> int:
        return len(self.sparse_fields)

    @property
    def t(self) -> int:
        return len(self.target_fields)

    def required_columns(self) -> list[str]:
        cols = list(self.feature_names) + list(self.target_fields)
        for key in (self.id_field, self.time_field):
            if key is not None and key not in cols:
                cols.append(key)
        return cols

    def to_dict(self) -> dict:
        return {
            "dense_fields": [[n, u] for n, u in self.dense_fields],
            "sparse_fields": [[n, c] for n, c in self.sparse_fields],
            "target_fields": list(self.target_fields),
            "id_field": self.id_field,
            "time_field": self.time_field,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        unknown = set(d) - {"dense_fields", "sparse_fields", "target_fields", "id_field", "time_field"}
        if unknown:
            raise SchemaError(f"unknown schema keys: {sorted(unknown)}")
        try:
            return cls(
                dense_fields=[_pair(x, "") for x in d.get("dense_fields", [])],
                sparse_fields=[_pair(x, None) for x in d.get("sparse_fields", [])],
                target_fields=d["target_fields"],
                id_field=d.get("id_field"),
                time_field=d.get("time_field"),
            )
        except KeyError as exc:
            raise SchemaError(f"schema is missing {exc.args[0]!r}") from None


def _pair(x, default):
    if isinstance(x, str):
        if default is None:
            raise SchemaError(f"sparse field {x!r} needs a cardinality")
        return (x, default)
    if isinstance(x, dict):
        return (x["name"], x.get("unit", x.get("cardinality", default)))
    return tuple(x)


def load_schema(path) -> FeatureSchema:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"schema file not found: {path}")
    try:
        return FeatureSchema.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise InputError(f"schema file {path} is not valid JSON: {exc}") from None


def save_schema(schema: FeatureSchema, path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")


def carbon_panel_schema(n_cities: int = 275, n_years: int = 13) -> FeatureSchema:
    """Indicator layout of the 275-city panel (2009-2021).

    Policy dummies stay dense; only city and year are embedded.
    """
    dense = [
        ("population", "10^4 persons"),
        ("gdp", "yuan"),
        ("urbanization_rate", "%"),
        ("city_size", "[1,7]"),
        ("city_development_level", "[1,5]"),
        ("industry_agglomeration_level", "employment per km^2"),
        ("environmental_pollution_index", "index"),
        ("low_carbon_city", "{0,1}"),
        ("carbon_peak_city", "{0,1}"),
        ("smart_city", "{0,1}"),
        ("nqpf", "index"),
        ("digital_economy_index", "z-score"),
        ("ai_technology_level", "index"),
    ]
    return FeatureSchema(
        dense_fields=dense,
        sparse_fields=[("city_id", n_cities), ("year", n_years)],
        target_fields=["carbon_emissions"],
        id_field="city_id",
        time_field="year",
    )


@dataclass
class IngestLog:
    rows_read: int = 0
    rows_kept: int = 0
    dropped: Counter = field(default_factory=Counter)

    @property
    def rows_dropped(self) -> int:
        return sum(self.dropped.values())

    def to_text(self) -> str:
        lines = [f"rows_read: {self.rows_read}", f"rows_kept: {self.rows_kept}",
                 f"rows_dropped: {self.rows_dropped}"]
        for reason in sorted(self.dropped):
            lines.append(f"dropped[{reason}]: {self.dropped[reason]}")
        return "\n".join(lines) + "\n"


@dataclass
class Dataset:
    schema: FeatureSchema
    dense: np.ndarray  # (n_rows, m) float64
    sparse_codes: np.ndarray  # (n_rows, n) int64
    targets: np.ndarray  # (n_rows, t) float64
    row_keys: list[tuple[str, str]]
    category_maps: dict[str, list[str]] = field(default_factory=dict)
    ingest_log: IngestLog | None = None

    def __post_init__(self):
        s = self.schema
        n = len(self.row_keys)
        self.dense = np.asarray(self.dense, dtype=np.float64).reshape(n, s.m)
        self.sparse_codes = np.asarray(self.sparse_codes, dtype=np.int64).reshape(n, s.n)
        self.targets = np.asarray(self.targets, dtype=np.float64).reshape(n, s.t)
        for j, card in enumerate(s.cardinalities):
            col = self.sparse_codes[:, j]
            if col.size and (col.min() < 0 or col.max() >= card):
                raise EncodingError(f"codes for {s.sparse_names[j]!r} fall outside [0, {card})")

    @property
    def n_rows(self) -> int:
        return len(self.row_keys)

    def features(self) -> np.ndarray:
        """Raw field matrix (n_rows, m + n); sparse codes are cast to float."""
        return np.hstack([self.dense, self.sparse_codes.astype(np.float64)])

    def subset(self, rows: Sequence[int]) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return replace(
            self,
            dense=self.dense[rows],
            sparse_codes=self.sparse_codes[rows],
            targets=self.targets[rows],
            row_keys=[self.row_keys[i] for i in rows],
            ingest_log=None,
        )


def _is_missing(cell: str | None) -> bool:
    return cell is None or cell.strip().lower() in MISSING_TOKENS


def _parse_float(cell: str | None) -> float | None:
    if _is_missing(cell):
        return None
    try:
        value = float(cell)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def ingest_csv(path, schema: FeatureSchema, category_maps: dict[str, Iterable[str]] | None = None) -> Dataset:
    """Read a comma-separated panel into a :class:`Dataset`.

    Sparse labels are mapped through ``category_maps`` when supplied; labels not
    yet seen are appended in first-seen order until the declared cardinality is
    exhausted.  Rows with a missing or unparseable cell in any schema column are
    dropped and tallied in ``Dataset.ingest_log``.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"data file not found: {path}")
    maps = {name: list(category_maps.get(name, [])) if category_maps else [] for name in schema.sparse_names}
    lookup = {name: {label: i for i, label in enumerate(labels)} for name, labels in maps.items()}
    for name, card in schema.sparse_fields:
        if len(maps[name]) > card:
            raise EncodingError(f"category map for {name!r} has {len(maps[name])} labels, cardinality is {card}")

    log = IngestLog()
    dense_rows, code_rows, target_rows, keys = [], [], [], []
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in schema.required_columns():
            if col not in header:
                raise SchemaError(f"column {col!r} missing from {path}")
        for row in reader:
            log.rows_read += 1
            reason = None
            dense = []
            for name in schema.dense_names:
                v = _parse_float(row.get(name))
                if v is None:
                    reason = f"dense:{name}"
                    break
                dense.append(v)
            targets = []
            if reason is None:
                for name in schema.target_fields:
                    v = _parse_float(row.get(name))
                    if v is None:
                        reason = f"target:{name}"
                        break
                    targets.append(v)
            labels = []
            if reason is None:
                for name in schema.sparse_names:
                    cell = row.get(name)
                    if _is_missing(cell):
                        reason = f"sparse:{name}"
                        break
                    labels.append(cell.strip())
            if reason is None:
                for key in (schema.id_field, schema.time_field):
                    if key is not None and _is_missing(row.get(key)):
                        reason = f"key:{key}"
                        break
            if reason is not None:
                log.dropped[reason] += 1
                continue
            codes = []
            for (name, card), label in zip(schema.sparse_fields, labels):
                table = lookup[name]
                if label not in table:
                    if len(table) >= card:
                        raise EncodingError(
                            f"label {label!r} of {name!r} exceeds declared cardinality {card}")
                    table[label] = len(table)
                    maps[name].append(label)
                codes.append(table[label])
            dense_rows.append(dense)
            target_rows.append(targets)
            code_rows.append(codes)
            keys.append((
                row[schema.id_field].strip() if schema.id_field else str(log.rows_read - 1),
                row[schema.time_field].strip() if schema.time_field else "",
            ))
    log.rows_kept = len(keys)
    n = len(keys)
    return Dataset(
        schema=schema,
        dense=np.array(dense_rows, dtype=np.float64).reshape(n, schema.m),
        sparse_codes=np.array(code_rows, dtype=np.int64).reshape(n, schema.n),
        targets=np.array(target_rows, dtype=np.float64).reshape(n, schema.t),
        row_keys=keys,
        category_maps=maps,
        ingest_log=log,
    )


def write_csv(ds: Dataset, path) -> None:
    """Serialize a dataset so that :func:`ingest_csv` reads back identical values."""
    s = ds.schema
    cols = s.required_columns()
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i in range(ds.n_rows):
            rec = {}
            for j, name in enumerate(s.dense_names):
                rec[name] = repr(float(ds.dense[i, j]))
            for j, name in enumerate(s.target_fields):
                rec[name] = repr(float(ds.targets[i, j]))
            for j, name in enumerate(s.sparse_names):
                labels = ds.category_maps.get(name)
                code = int(ds.sparse_codes[i, j])
                rec[name] = labels[code] if labels else str(code)
            if s.id_field is not None and s.id_field not in rec:
                rec[s.id_field] = ds.row_keys[i][0]
            if s.time_field is not None and s.time_field not in rec:
                rec[s.time_field] = ds.row_keys[i][1]
            w.writerow([rec[c] for c in cols])


def save_category_maps(maps: dict[str, list[str]], path) -> None:
    Path(path).write_text(json.dumps(maps, indent=2) + "\n", encoding="utf-8")


def load_category_maps(path) -> dict[str, list[str]]:
    return {k: [str(x) for x in v] for k, v in json.loads(Path(path).read_text(encoding="utf-8")).items()}


@dataclass(frozen=True)
class StandardizerStats:
    names: tuple[str, ...]
    mu: np.ndarray
    sigma: np.ndarray
    constant: np.ndarray  # bool

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = (x - self.mu) / self.safe_sigma
        return np.where(self.constant, 0.0, out)

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.safe_sigma + self.mu

    @property
    def safe_sigma(self) -> np.ndarray:
        return np.where(self.constant, 1.0, self.sigma)

    @property
    def scale(self) -> np.ndarray:
        """Derivative of ``transform`` with respect to its input."""
        return np.where(self.constant, 0.0, 1.0 / self.safe_sigma)

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "mu": [float(v) for v in self.mu],
            "sigma": [float(v) for v in self.sigma],
            "constant": [bool(v) for v in self.constant],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizerStats":
        return cls(tuple(d["names"]), np.array(d["mu"], dtype=np.float64),
                   np.array(d["sigma"], dtype=np.float64), np.array(d["constant"], dtype=bool))

    @classmethod
    def identity(cls, names: Sequence[str]) -> "StandardizerStats":
        k = len(names)
        return cls(tuple(names), np.zeros(k), np.ones(k), np.zeros(k, dtype=bool))


def _fit_columns(names, values: np.ndarray) -> StandardizerStats:
    mu = values.mean(axis=0)
    sigma = values.std(axis=0)  # population (divisor N)
    constant = sigma == 0.0
    return StandardizerStats(tuple(names), mu, sigma, constant)


def fit_standardizer(ds: Dataset, rows: Sequence[int]) -> StandardizerStats:
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ArgumentError("cannot fit a standardizer on zero rows")
    return _fit_columns(ds.schema.dense_names, ds.dense[rows])


def fit_target_scaler(ds: Dataset, rows: Sequence[int]) -> StandardizerStats:
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ArgumentError("cannot fit a target scaler on zero rows")
    return _fit_columns(ds.schema.target_fields, ds.targets[rows])


def apply_standardizer(ds: Dataset, stats: StandardizerStats) -> Dataset:
    if tuple(stats.names) != ds.schema.dense_names:
        raise SchemaError(f"standardizer fields {list(stats.names)} do not match dataset {list(ds.schema.dense_names)}")
    return replace(ds, dense=stats.transform(ds.dense))


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray
    seed: int
    ratio: float


def train_size(n_rows: int, ratio: float) -> int:
    # floor, with slack for products like 0.29 * 100 = 28.999999999999996
    return int(math.floor(ratio * n_rows + 1e-9))


def split(n_rows: int, ratio: float = 0.75, seed: int = 0) -> SplitIndices:
    if n_rows < 2:
        raise ArgumentError(f"need at least 2 rows to split, got {n_rows}")
    if not 0.0 < ratio < 1.0:
        raise ArgumentError(f"split ratio must be in (0, 1), got {ratio}")
    perm = np.random.default_rng(seed).permutation(n_rows)
    k = train_size(n_rows, ratio)
    return SplitIndices(train=perm[:k], test=perm[k:], seed=seed, ratio=ratio)
