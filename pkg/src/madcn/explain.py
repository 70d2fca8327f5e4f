"""Shapley attributions for fitted models.

Features are schema fields; a sparse field is one atomic player whose code is
swapped wholesale.  The value of a coalition S is interventional: features in
S are taken from the explained sample, all others from each background row,
and the model output is averaged over the background.  Fields excluded from
the explained set stay pinned to the sample's values in every coalition, so
``phi0 + sum(phi) == f(x)`` still holds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ArgumentError, CapacityError, InputError, SchemaError
from .features import Dataset
from .network import MadcnModel

MAX_EXACT_FEATURES = 20
EVAL_ROWS = 65536

Predictor = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BackgroundSet:
    rows: np.ndarray  # (B, n_fields) raw field values, sparse codes as floats
    seed: int = 0

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise ArgumentError("background needs at least one row")
        object.__setattr__(self, "rows", rows)


def sample_background(ds: Dataset, rows: Sequence[int], size: int = 64, seed: int = 0) -> BackgroundSet:
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ArgumentError("cannot draw a background from zero rows")
    pick = np.random.default_rng(seed).choice(rows, size=min(size, rows.size), replace=False)
    return BackgroundSet(ds.features()[pick], seed)


def model_predictor(model: MadcnModel, target: int = 0) -> Predictor:
    """Adapt a network to a function of the raw field matrix."""
    m = model.schema.m

    def f(X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return model.predict(X[:, :m], X[:, m:].astype(np.int64))[:, target]

    return f


def _as_predictor(model, target: int) -> Predictor:
    if isinstance(model, MadcnModel):
        return model_predictor(model, target)
    if not callable(model):
        raise ArgumentError("model must be a MadcnModel or a callable on the field matrix")

    def f(X):
        out = np.asarray(model(X), dtype=np.float64)
        return out[:, target] if out.ndim == 2 else out

    return f


@dataclass
class Explanation:
    phi0: float
    phi: np.ndarray
    fx: float
    method: str
    n_permutations: int
    feature_names: tuple[str, ...]
    feature_values: np.ndarray | None = None
    sample_key: tuple[str, str] = ("", "")
    efficiency_adjusted: bool = False
    residual: float = 0.0

    @property
    def efficiency_gap(self) -> float:
        return abs(self.phi0 + float(np.sum(self.phi)) - self.fx)


class _Game:
    """Coalition values for one sample, with hybrids evaluated in large batches."""

    def __init__(self, f: Predictor, x: np.ndarray, bg: BackgroundSet, players: Sequence[int]):
        self.f = f
        self.x = np.asarray(x, dtype=np.float64).ravel()
        if bg.rows.shape[1] != self.x.size:
            raise SchemaError(f"background has {bg.rows.shape[1]} fields, sample has {self.x.size}")
        self.bg = bg.rows
        self.players = list(players)
        pinned = np.ones(self.x.size, dtype=bool)
        pinned[self.players] = False
        self.pinned = pinned
        self.full_mask = (1 << len(self.players)) - 1

    def fx(self) -> float:
        return float(self.f(self.x[None, :])[0])

    def values(self, masks: Sequence[int]) -> np.ndarray:
        masks = np.asarray(masks, dtype=np.int64)
        out = np.empty(masks.size)
        B, n_fields = self.bg.shape
        bits = np.arange(len(self.players), dtype=np.int64)
        per_chunk = max(1, EVAL_ROWS // B)
        for lo in range(0, masks.size, per_chunk):
            chunk = masks[lo:lo + per_chunk]
            take = np.broadcast_to(self.pinned, (chunk.size, n_fields)).copy()
            take[:, self.players] = (chunk[:, None] >> bits[None, :]) & 1 == 1
            hybrid = np.where(take[:, None, :], self.x[None, None, :], self.bg[None, :, :])
            preds = self.f(hybrid.reshape(-1, n_fields)).reshape(chunk.size, B)
            out[lo:lo + chunk.size] = _shifted_mean(preds)
        return out


def _shifted_mean(a: np.ndarray) -> np.ndarray:
    # exact when a row's entries are all equal, which keeps null players at exactly 0
    first = a[:, :1]
    return first[:, 0] + np.sum(a - first, axis=1) / a.shape[1]


def _resolve_features(n_fields: int, names: Sequence[str] | None, features) -> list[int]:
    if features is None:
        return list(range(n_fields))
    idx = []
    for f in features:
        if isinstance(f, str):
            if names is None or f not in names:
                raise ArgumentError(f"unknown feature {f!r}")
            idx.append(list(names).index(f))
        else:
            idx.append(int(f))
    if len(set(idx)) != len(idx) or any(not 0 <= i < n_fields for i in idx):
        raise ArgumentError(f"invalid explained feature set {features!r}")
    return idx


def _field_names(model, n_fields: int) -> tuple[str, ...]:
    if isinstance(model, MadcnModel):
        return model.schema.feature_names
    return tuple(f"x{i + 1}" for i in range(n_fields))


def coalition_value(model, x, S: Iterable[int], bg: BackgroundSet, target: int = 0) -> float:
    """Mean prediction over ``bg`` with the columns in ``S`` overwritten by ``x``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if isinstance(model, MadcnModel) and x.size != len(model.schema.feature_names):
        raise SchemaError(f"sample has {x.size} fields, model expects {len(model.schema.feature_names)}")
    S = sorted(set(int(i) for i in S))
    game = _Game(_as_predictor(model, target), x, bg, [i for i in range(x.size) if i not in S])
    # every non-player column is pinned to x, so the empty player set is exactly S
    return float(game.values([0])[0])


def shapley_weights(n: int) -> np.ndarray:
    """|S|! (n - |S| - 1)! / n! for |S| = 0 .. n-1."""
    return np.array([1.0 / (n * math.comb(n - 1, s)) for s in range(n)])


def shap_exact(model, x, bg: BackgroundSet, features=None, target: int = 0,
               sample_key: tuple[str, str] = ("", "")) -> Explanation:
    x = np.asarray(x, dtype=np.float64).ravel()
    names = _field_names(model, x.size)
    players = _resolve_features(x.size, names, features)
    F = len(players)
    if F > MAX_EXACT_FEATURES:
        raise CapacityError(
            f"exact Shapley over {F} features needs 2^{F} coalitions (limit {MAX_EXACT_FEATURES}); "
            "use permutation sampling instead")
    game = _Game(_as_predictor(model, target), x, bg, players)
    masks = np.arange(1 << F)
    v = game.values(masks)
    size = np.array([bin(s).count("1") for s in range(1 << F)])
    w = shapley_weights(F) if F else np.zeros(0)
    phi = np.zeros(F)
    for i in range(F):
        without = masks[(masks >> i) & 1 == 0]
        phi[i] = np.sum(w[size[without]] * (v[without | (1 << i)] - v[without]))
    return Explanation(
        phi0=float(v[0]), phi=phi, fx=game.fx(), method="exact", n_permutations=0,
        feature_names=tuple(names[i] for i in players), feature_values=x[players].copy(),
        sample_key=tuple(sample_key),
    )


def shap_permutation(model, x, bg: BackgroundSet, features=None, n_perm: int = 64, seed: int = 0,
                     target: int = 0, sample_key: tuple[str, str] = ("", ""),
                     permutations: Iterable[Sequence[int]] | None = None) -> Explanation:
    """Monte-Carlo Shapley values averaged over random player orderings.

    ``permutations`` replaces the random draws with explicit orderings (as
    positions into the explained feature list); ``n_perm`` is then ignored.
    Any efficiency residual is spread over players in proportion to ``|phi|``
    and reported through ``efficiency_adjusted`` / ``residual``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    names = _field_names(model, x.size)
    players = _resolve_features(x.size, names, features)
    F = len(players)
    if permutations is None:
        if n_perm < 1:
            raise ArgumentError(f"n_perm must be >= 1, got {n_perm}")
        rng = np.random.default_rng(seed)
        orders = [rng.permutation(F) for _ in range(n_perm)]
    else:
        orders = [np.asarray(p, dtype=np.int64) for p in permutations]
        if not orders or any(sorted(p.tolist()) != list(range(F)) for p in orders):
            raise ArgumentError("each ordering must be a permutation of the explained features")
    game = _Game(_as_predictor(model, target), x, bg, players)

    chains = []
    for order in orders:
        s, chain = 0, [0]
        for j in order:
            s |= 1 << int(j)
            chain.append(s)
        chains.append(chain)
    needed = sorted({s for chain in chains for s in chain})
    lookup = dict(zip(needed, game.values(needed)))

    phi = np.zeros(F)
    for order, chain in zip(orders, chains):
        for pos, j in enumerate(order):
            phi[j] += lookup[chain[pos + 1]] - lookup[chain[pos]]
    phi /= len(orders)

    phi0 = float(lookup[0])
    fx = game.fx()
    residual = fx - phi0 - float(np.sum(phi))
    adjusted = residual != 0.0
    if adjusted:
        mag = np.abs(phi)
        total = mag.sum()
        phi = phi + (residual * mag / total if total > 0 else residual / max(F, 1))
    return Explanation(
        phi0=phi0, phi=phi, fx=fx, method="permutation", n_permutations=len(orders),
        feature_names=tuple(names[i] for i in players), feature_values=x[players].copy(),
        sample_key=tuple(sample_key), efficiency_adjusted=adjusted, residual=residual,
    )


def importance_summary(explanations: Sequence[Explanation]) -> list[tuple[str, float]]:
    """Mean |phi| per feature, largest first; ties fall back to name order."""
    if not explanations:
        raise ArgumentError("importance needs at least one explanation")
    names = explanations[0].feature_names
    for e in explanations:
        if e.feature_names != names:
            raise ArgumentError("explanations cover different feature sets")
    mean_abs = np.mean(np.abs(np.stack([e.phi for e in explanations])), axis=0)
    return sorted(((n, float(v)) for n, v in zip(names, mean_abs)), key=lambda t: (-t[1], t[0]))


@dataclass(frozen=True)
class DependenceRecord:
    sample_key: tuple[str, str]
    feature_value: float
    shap_value: float
    color_feature_value: float


def display_value(name: str, value: float, category_maps: dict[str, list[str]] | None) -> float:
    """Sparse codes are reported as their label when the label is numeric (e.g. a year)."""
    labels = (category_maps or {}).get(name)
    if labels:
        code = int(value)
        if 0 <= code < len(labels):
            try:
                return float(labels[code])
            except ValueError:
                pass
    return float(value)


def dependence_export(explanations: Sequence[Explanation], feature: str, color_feature: str,
                      ds: Dataset | None = None) -> list[DependenceRecord]:
    maps = ds.category_maps if ds is not None else None
    out = []
    for e in explanations:
        for name in (feature, color_feature):
            if name not in e.feature_names:
                raise ArgumentError(f"feature {name!r} is not in the explained set")
            if ds is not None and name not in ds.schema.feature_names:
                raise ArgumentError(f"feature {name!r} is not in the dataset schema")
        i = e.feature_names.index(feature)
        c = e.feature_names.index(color_feature)
        out.append(DependenceRecord(
            e.sample_key,
            display_value(feature, e.feature_values[i], maps),
            float(e.phi[i]),
            display_value(color_feature, e.feature_values[c], maps),
        ))
    return out


@dataclass(frozen=True)
class ForceRecord:
    phi0: float
    fx: float
    entries: list[tuple[str, float, str]] = field(default_factory=list)


def force_record(explanation: Explanation) -> ForceRecord:
    def direction(v: float) -> str:
        return "+" if v > 0 else "-" if v < 0 else "0"

    pairs = sorted(zip(explanation.feature_names, explanation.phi.tolist()), key=lambda t: (-abs(t[1]), t[0]))
    return ForceRecord(explanation.phi0, explanation.fx, [(n, v, direction(v)) for n, v in pairs])


# --------------------------------------------------------------------------- CSV exports

EXPLANATION_COLUMNS = ["sample_id", "year", "feature", "phi", "feature_value", "method",
                       "n_permutations", "phi0", "fx"]
IMPORTANCE_COLUMNS = ["feature", "mean_abs_shap", "rank"]
DEPENDENCE_COLUMNS = ["sample_id", "year", "feature_value", "shap_value", "color_feature_value"]


def write_explanations_csv(explanations: Sequence[Explanation], path,
                           category_maps: dict[str, list[str]] | None = None) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(EXPLANATION_COLUMNS)
        for e in explanations:
            for i, name in enumerate(e.feature_names):
                value = display_value(name, e.feature_values[i], category_maps)
                w.writerow([e.sample_key[0], e.sample_key[1], name, repr(float(e.phi[i])), repr(value),
                            e.method, e.n_permutations, repr(e.phi0), repr(e.fx)])


def read_explanations_csv(path) -> list[Explanation]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"explanations file not found: {path}")
    groups: dict[tuple[str, str], list[dict]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(EXPLANATION_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise SchemaError(f"{path} lacks columns {sorted(missing)}")
        for row in reader:
            groups.setdefault((row["sample_id"], row["year"]), []).append(row)
    out = []
    for key, rows in groups.items():
        out.append(Explanation(
            phi0=float(rows[0]["phi0"]),
            phi=np.array([float(r["phi"]) for r in rows]),
            fx=float(rows[0]["fx"]),
            method=rows[0]["method"],
            n_permutations=int(rows[0]["n_permutations"]),
            feature_names=tuple(r["feature"] for r in rows),
            feature_values=np.array([float(r["feature_value"]) for r in rows]),
            sample_key=key,
        ))
    return out


def write_importance_csv(ranking: Sequence[tuple[str, float]], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(IMPORTANCE_COLUMNS)
        for rank, (name, value) in enumerate(ranking, start=1):
            w.writerow([name, repr(value), rank])


def write_dependence_csv(records: Sequence[DependenceRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(DEPENDENCE_COLUMNS)
        for r in records:
            w.writerow([r.sample_key[0], r.sample_key[1], repr(r.feature_value), repr(r.shap_value),
                        repr(r.color_feature_value)])
