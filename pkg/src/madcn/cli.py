"""Command-line workflows: train, evaluate, predict, explain, importance,
dependence, benchmark and gradcheck.

Exit codes: 0 success, 2 input/IO, 3 schema mismatch, 4 capacity,
5 divergence (1 for a failed gradient check).
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import baselines, explain
from .errors import ArgumentError, InputError, MadcnError, SchemaError
from .features import (Dataset, FeatureSchema, StandardizerStats, fit_standardizer, fit_target_scaler,
                       ingest_csv, load_category_maps, load_schema, save_category_maps, split)
from .network import Hyperparams, MadcnModel, NoiseConfig, gradient_suite, load_model, save_model
from .numcore import grad_check
from .training import TrainConfig, evaluate, predict_rows, train

SEED_NAMES = ("split", "init", "shuffle", "noise", "shap")
BENCHMARK_COLUMNS = ["model", "train_mse", "train_mae", "train_r2", "test_mse", "test_mae", "test_r2"]
BENCHMARK_MODELS = ("LR", "KNN", "DNN", "DCN", "MADCN")

DEFAULTS = {
    "seed": 0,
    "seeds": None,
    "split": {"ratio": 0.75},
    "model": {
        "embed_dim": 8, "cross_layers": 3, "deep_units": [128, 64], "heads": 4, "d_model": 32, "d_k": 8,
        "noise_mu": 0.0, "noise_sigma": 0.1, "noise_train_only": True, "standardize_targets": True,
    },
    "train": {
        "epochs": 200, "batch_size": 256, "learning_rate": 1e-3, "adam_beta1": 0.9, "adam_beta2": 0.999,
        "adam_eps": 1e-8, "early_stop_patience": 20, "validation_fraction": 0.1, "optimizer": "adam",
    },
    "baselines": {"knn_k": 5, "ridge_lambda": 1e-6, "models": list(BENCHMARK_MODELS)},
    "explain": {
        "method": "exact", "n_permutations": 64, "background_size": 64, "rows": "test", "max_samples": 20,
        "exclude_fields": [], "dependence": [],
    },
}


def derive_seeds(seed: int) -> dict[str, int]:
    children = np.random.SeedSequence(seed).spawn(len(SEED_NAMES))
    return {name: int(c.generate_state(1)[0]) for name, c in zip(SEED_NAMES, children)}


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ArgumentError(f"unknown config key {where + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ArgumentError(f"config key {where + key!r} must be an object")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def resolve_config(path=None, seed: int | None = None) -> dict:
    """Defaults <- config file <- --seed flag, with every sub-seed materialized."""
    user = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise InputError(f"config file not found: {path}")
        try:
            user = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"config file {path} is not valid JSON: {exc}") from None
    cfg = _merge(DEFAULTS, user)
    if seed is not None:
        cfg["seed"] = seed
        cfg["seeds"] = None
    derived = derive_seeds(int(cfg["seed"]))
    if cfg["seeds"] is None:
        cfg["seeds"] = derived
    else:
        unknown = set(cfg["seeds"]) - set(SEED_NAMES)
        if unknown:
            raise ArgumentError(f"unknown sub-seeds {sorted(unknown)}")
        cfg["seeds"] = {name: int(cfg["seeds"].get(name, derived[name])) for name in SEED_NAMES}
    return cfg


def hyperparams_from(cfg: dict, variant: str = "madcn") -> Hyperparams:
    m = cfg["model"]
    noise = NoiseConfig(m["noise_mu"], m["noise_sigma"], m["noise_train_only"])
    hyper = Hyperparams(m["embed_dim"], m["cross_layers"], tuple(m["deep_units"]), m["heads"], m["d_model"],
                        m["d_k"], noise)
    if variant != "madcn":
        from .network import with_variant
        hyper = with_variant(hyper, variant)
    return hyper


def train_config_from(cfg: dict) -> TrainConfig:
    return TrainConfig(**cfg["train"], seed=cfg["seeds"]["shuffle"], noise_seed=cfg["seeds"]["noise"])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(args, out: Path) -> None:
    _write_json(out / "resolved_config.json", resolve_config(args.config, args.seed))


def _load_data(schema: FeatureSchema, data_path, maps=None) -> Dataset:
    ds = ingest_csv(data_path, schema, maps)
    if ds.n_rows == 0:
        raise InputError(f"{data_path}: no usable rows after ingestion")
    return ds


def _schema_maps(schema_path: Path):
    sibling = schema_path.with_name("category_maps.json")
    return load_category_maps(sibling) if sibling.is_file() else None


def _prepare(args, cfg):
    schema_path = Path(args.schema)
    schema = load_schema(schema_path)
    ds = _load_data(schema, args.data, _schema_maps(schema_path))
    sp = split(ds.n_rows, cfg["split"]["ratio"], cfg["seeds"]["split"])
    return schema, ds, sp


def _build(schema, ds, sp, cfg, variant="madcn", metadata=None) -> MadcnModel:
    stats = fit_standardizer(ds, sp.train)
    target = fit_target_scaler(ds, sp.train) if cfg["model"]["standardize_targets"] \
        else StandardizerStats.identity(schema.target_fields)
    if np.any(target.constant):
        target = StandardizerStats.identity(schema.target_fields)
    return MadcnModel(schema, hyperparams_from(cfg, variant), cfg["seeds"]["init"], stats, target,
                      ds.category_maps, metadata)


def _metrics_json(metrics: dict) -> dict:
    if len(metrics) == 1:
        return next(iter(metrics.values())).to_dict()
    return {name: m.to_dict() for name, m in metrics.items()}


# --------------------------------------------------------------------------- commands


def cmd_train(args) -> int:
    cfg = resolve_config(args.config, args.seed)
    out = _out_dir(args)
    schema, ds, sp = _prepare(args, cfg)
    meta = {"split": {"ratio": cfg["split"]["ratio"], "seed": cfg["seeds"]["split"]}, "config": cfg}
    model = _build(schema, ds, sp, cfg, metadata=meta)
    trained, report = train(model, ds, sp, train_config_from(cfg), progress=sys.stderr)
    model_path = Path(args.model) if args.model else out / "model.madcn"
    save_model(trained, model_path)
    _write_json(out / "train_report.json", report.to_dict())
    _write_json(out / "resolved_config.json", cfg)
    save_category_maps(ds.category_maps, out / "category_maps.json")
    (out / "ingest_log.txt").write_text(ds.ingest_log.to_text(), encoding="utf-8")
    print(json.dumps({"model": str(model_path), "train": _metrics_json(report.train_metrics),
                      "test": _metrics_json(report.test_metrics) if report.test_metrics else None}))
    return 0


def _model_split(model: MadcnModel, ds: Dataset, args):
    info = model.metadata.get("split", {})
    ratio = args.split_ratio if args.split_ratio is not None else info.get("ratio", DEFAULTS["split"]["ratio"])
    if args.split_seed is not None:
        seed = args.split_seed
    elif args.seed is not None:
        seed = derive_seeds(args.seed)["split"]
    else:
        seed = info.get("seed", derive_seeds(0)["split"])
    return split(ds.n_rows, ratio, seed)


def _load_model_and_data(args):
    model = load_model(args.model)
    ds = _load_data(model.schema, args.data, model.category_maps or None)
    return model, ds


def cmd_evaluate(args) -> int:
    model, ds = _load_model_and_data(args)
    sp = _model_split(model, ds, args)
    result = {"train": _metrics_json(evaluate(model, ds, sp.train)),
              "test": _metrics_json(evaluate(model, ds, sp.test))}
    text = json.dumps(result)
    print(text)
    if args.out:
        out = _out_dir(args)
        (out / "metrics.json").write_text(text + "\n", encoding="utf-8")
        _echo_config(args, out)
    return 0


def cmd_predict(args) -> int:
    model, ds = _load_model_and_data(args)
    pred = predict_rows(model, ds, np.arange(ds.n_rows))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "year"] + [f"{t}_pred" for t in model.schema.target_fields])
    for key, row in zip(ds.row_keys, pred):
        w.writerow([key[0], key[1]] + [repr(float(v)) for v in row])
    if args.out:
        out = _out_dir(args)
        (out / "predictions.csv").write_text(buf.getvalue(), encoding="utf-8")
        _echo_config(args, out)
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def _explain_rows(cfg_e: dict, sp, n_rows: int) -> np.ndarray:
    rows = cfg_e["rows"]
    if rows == "test":
        idx = np.asarray(sp.test)
    elif rows == "train":
        idx = np.asarray(sp.train)
    elif rows == "all":
        idx = np.arange(n_rows)
    elif isinstance(rows, list):
        idx = np.asarray(rows, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n_rows):
            raise ArgumentError(f"explain.rows indexes outside [0, {n_rows})")
    else:
        raise ArgumentError("explain.rows must be 'test', 'train', 'all' or a list of row indices")
    limit = cfg_e["max_samples"]
    return idx if limit is None else idx[:int(limit)]


def cmd_explain(args) -> int:
    cfg = resolve_config(args.config, args.seed)
    out = _out_dir(args)
    model, ds = _load_model_and_data(args)
    sp = _model_split(model, ds, args)
    ce = cfg["explain"]
    if ce["method"] not in ("exact", "permutation"):
        raise ArgumentError(f"explain.method must be 'exact' or 'permutation', got {ce['method']!r}")
    names = model.schema.feature_names
    unknown = [f for f in ce["exclude_fields"] if f not in names]
    if unknown:
        raise ArgumentError(f"exclude_fields names unknown fields {unknown}")
    features = [n for n in names if n not in ce["exclude_fields"]]
    bg_seed, perm_seed = np.random.SeedSequence(cfg["seeds"]["shap"]).generate_state(2)
    bg = explain.sample_background(ds, sp.train, ce["background_size"], int(bg_seed))
    X = ds.features()
    exps = []
    for k, r in enumerate(_explain_rows(ce, sp, ds.n_rows)):
        key = ds.row_keys[r]
        if ce["method"] == "exact":
            e = explain.shap_exact(model, X[r], bg, features, sample_key=key)
        else:
            e = explain.shap_permutation(model, X[r], bg, features, ce["n_permutations"],
                                         seed=[int(perm_seed), k], sample_key=key)
        exps.append(e)
    if not exps:
        raise ArgumentError("no rows selected for explanation")
    explain.write_explanations_csv(exps, out / "explanations.csv", model.category_maps)
    explain.write_importance_csv(explain.importance_summary(exps), out / "importance.csv")
    for pair in ce["dependence"]:
        feature, color = pair
        recs = explain.dependence_export(exps, feature, color, ds)
        explain.write_dependence_csv(recs, out / f"dependence_{feature}__{color}.csv")
    _write_json(out / "resolved_config.json", cfg)
    return 0


def cmd_importance(args) -> int:
    ranking = explain.importance_summary(explain.read_explanations_csv(args.explanations))
    if args.out:
        out = _out_dir(args)
        explain.write_importance_csv(ranking, out / "importance.csv")
        _echo_config(args, out)
    for rank, (name, value) in enumerate(ranking, start=1):
        print(f"{name},{value!r},{rank}")
    return 0


def cmd_dependence(args) -> int:
    exps = explain.read_explanations_csv(args.explanations)
    recs = explain.dependence_export(exps, args.feature, args.color)
    out = _out_dir(args)
    explain.write_dependence_csv(recs, out / f"dependence_{args.feature}__{args.color}.csv")
    _echo_config(args, out)
    return 0


def _benchmark_row(name: str, model, ds, sp, target: str) -> list[str]:
    tr = evaluate(model, ds, sp.train)[target]
    te = evaluate(model, ds, sp.test)[target]
    return [name] + [repr(v) for v in (tr.mse, tr.mae, tr.r2, te.mse, te.mae, te.r2)]


def run_benchmark(ds: Dataset, sp, cfg: dict, progress=None) -> list[list[str]]:
    schema = ds.schema
    cb = cfg["baselines"]
    unknown = [m for m in cb["models"] if m not in BENCHMARK_MODELS]
    if unknown:
        raise ArgumentError(f"unknown benchmark models {unknown}")
    tcfg = train_config_from(cfg)
    variants = {"DNN": "dnn_only", "DCN": "dcn_no_attention", "MADCN": "madcn"}
    rows = []
    for name in cb["models"]:
        try:
            if name == "LR":
                model = baselines.LinearBaseline(schema, cb["ridge_lambda"]).fit(ds, sp.train)
            elif name == "KNN":
                model = baselines.KnnBaseline(schema, cb["knn_k"]).fit(ds, sp.train)
            else:
                model, _ = train(_build(schema, ds, sp, cfg, variants[name]), ds, sp, tcfg, progress)
            for target in schema.target_fields:
                label = name if schema.t == 1 else f"{name}[{target}]"
                rows.append(_benchmark_row(label, model, ds, sp, target))
        except MadcnError as exc:
            print(f"benchmark: {name} failed: {exc}", file=sys.stderr)
            rows.append([name, f"ERROR: {exc}"] + [""] * 5)
    return rows


def cmd_benchmark(args) -> int:
    cfg = resolve_config(args.config, args.seed)
    out = _out_dir(args)
    _, ds, sp = _prepare(args, cfg)
    rows = run_benchmark(ds, sp, cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCHMARK_COLUMNS)
    w.writerows(rows)
    sys.stdout.write(buf.getvalue())
    (out / "benchmark.csv").write_text(buf.getvalue(), encoding="utf-8")
    _write_json(out / "resolved_config.json", cfg)
    ok = any(not r[1].startswith("ERROR") for r in rows)
    return 0 if ok else 1


def cmd_gradcheck(args) -> int:
    seed = 0 if args.seed is None else args.seed
    failed = 0
    for name, transform, inputs in gradient_suite(seed):
        report = grad_check(transform, inputs, args.eps, op_name=name)
        status = "PASS" if report.passed(args.tol) else "FAIL"
        failed += status == "FAIL"
        print(f"{status} {name} max_rel_error={report.max_rel_error:.3e} at {report.worst_coordinate}")
    if args.out:
        _echo_config(args, _out_dir(args))
    return 1 if failed else 0


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="top-level seed (overrides the config)")
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="madcn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        return p

    def split_flags(p):
        p.add_argument("--split-ratio", type=float)
        p.add_argument("--split-seed", type=int, help="raw split seed (as stored in the model)")

    p = add("train", cmd_train, "fit MADCN and write the model file and report")
    p.add_argument("--schema", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--model", help="model output path (default OUT/model.madcn)")

    p = add("evaluate", cmd_evaluate, "MSE/MAE/R^2 on the train and test partitions")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    split_flags(p)

    p = add("predict", cmd_predict, "predictions for every row")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)

    p = add("explain", cmd_explain, "Shapley explanations, importance and dependence tables")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    split_flags(p)

    p = add("importance", cmd_importance, "mean |SHAP| ranking from an explanations CSV")
    p.add_argument("--explanations", required=True)

    p = add("dependence", cmd_dependence, "dependence table from an explanations CSV")
    p.add_argument("--explanations", required=True)
    p.add_argument("--feature", required=True)
    p.add_argument("--color", required=True)

    p = add("benchmark", cmd_benchmark, "LR, KNN, DNN, DCN and MADCN on one shared split")
    p.add_argument("--schema", required=True)
    p.add_argument("--data", required=True)

    p = add("gradcheck", cmd_gradcheck, "finite-difference check of every layer")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-5)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MadcnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
