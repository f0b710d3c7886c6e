"""Config-driven experiment runner producing ``results.csv`` and ``summary.csv``."""
from __future__ import annotations

import copy
import csv
import hashlib
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import data as D
from .chebyshev import (
    fast_decompose,
    fast_reconstruct,
    fit_error,
    fit_filter,
    make_plan,
    partition_error,
)
from .errors import ConfigError
from .exact import eigendecompose
from .graph import normalized_laplacian
from .io import save_model
from .modulation import make_family
from .nn import HeteroModelParams, NetworkParams, TrainConfig, TrainData, predict, train
from .rng import stream

log = logging.getLogger(__name__)

DEFAULT_CONFIG: dict[str, dict[str, Any]] = {
    "dataset": {
        "manifest": None,
        "planetoid": None,
        "synthetic": None,
        "normalize_features": False,
    },
    "modulation": {"family": "entropy", "alpha": 0.75},
    "framelet": {"levels": 2, "dilation": 2.0, "cutoff": "none"},
    "chebyshev": {"degree": 3},
    "model": {
        "variant": "relu-filter",
        "hidden_units": 32,
        "dropout": 0.3,
        "freeze_filter": False,
        "merge": "mean",
    },
    "train": {
        "learning_rate": 0.01,
        "weight_decay": 5e-4,
        "epochs": 200,
        "early_stop_patience": 100,
    },
    "noise": {"kind": "none", "level": 0.0, "F": 1, "per_node": False},
    "experiment": {"name": "experiment", "repeats": 10, "seed": 0},
    "output": {"dir": "results", "wall_time": False, "checkpoint": True},
}

NOISE_KINDS = ("none", "binary", "gaussian", "highfreq")

# "5/10/20" levels: on TF-IDF scale features they mean std 0.05/0.1/0.2,
# on raw features the values are used as given.
NOISE_PRESETS = {
    "tfidf-5": ("gaussian", 0.05),
    "tfidf-10": ("gaussian", 0.1),
    "tfidf-20": ("gaussian", 0.2),
    "raw-5": ("gaussian", 5.0),
    "raw-10": ("gaussian", 10.0),
    "raw-20": ("gaussian", 20.0),
}


def valid_keys() -> list[str]:
    return [f"{s}.{k}" for s, keys in DEFAULT_CONFIG.items() for k in keys]


def merge_config(user: dict | None) -> dict:
    """Overlay ``user`` on the defaults, rejecting unknown sections and keys."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    for section, values in (user or {}).items():
        if section not in cfg:
            raise ConfigError(f"unknown config section {section!r}; valid keys: {', '.join(valid_keys())}")
        if not isinstance(values, dict):
            raise ConfigError(f"config section {section!r} must be a mapping")
        for key, value in values.items():
            if key not in cfg[section]:
                raise ConfigError(
                    f"unknown config key {section}.{key}; valid keys: {', '.join(valid_keys())}"
                )
            cfg[section][key] = value
    return cfg


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> dict:
    """Read a YAML config and apply ``section.key=value`` overrides."""
    user: dict = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            user = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except OSError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        base = path.parent
    cfg = merge_config(user)
    for item in overrides or []:
        set_key(cfg, item)
    # relative dataset paths are resolved against the config file
    ds = cfg["dataset"]
    if ds["manifest"] is not None:
        ds["manifest"] = str((base / ds["manifest"]).resolve())
    if isinstance(ds["planetoid"], dict) and "root" in ds["planetoid"]:
        ds["planetoid"] = dict(ds["planetoid"], root=str((base / ds["planetoid"]["root"]).resolve()))
    return cfg


def set_key(cfg: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    dotted, raw = item.split("=", 1)
    if "." not in dotted:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    section, key = dotted.split(".", 1)
    if section not in cfg or key not in cfg[section]:
        raise ConfigError(f"unknown config key {dotted}; valid keys: {', '.join(valid_keys())}")
    cfg[section][key] = yaml.safe_load(raw)


# -- dataset and model construction ---------------------------------------------


def build_dataset(cfg: dict) -> D.NodeDataset:
    ds_cfg = cfg["dataset"]
    sources = [k for k in ("manifest", "planetoid", "synthetic") if ds_cfg[k]]
    if len(sources) != 1:
        raise ConfigError("set exactly one of dataset.manifest, dataset.planetoid, dataset.synthetic")
    if ds_cfg["manifest"]:
        ds = D.load_dataset(ds_cfg["manifest"])
    elif ds_cfg["planetoid"]:
        p = ds_cfg["planetoid"]
        ds = D.load_planetoid(p["root"], p.get("name", "cora"))
    else:
        syn = dict(ds_cfg["synthetic"])
        kind = syn.pop("kind", "two_cluster")
        if kind == "two_cluster":
            ds = D.two_cluster_dataset(**syn)
        elif kind == "two_clique":
            ds = D.two_clique_dataset(**syn)
        else:
            raise ConfigError(f"unknown synthetic dataset {kind!r}")
    if ds_cfg["normalize_features"]:
        ds = ds.with_features(D.normalize_rows(ds.features))
    return ds


def build_plans(ds: D.NodeDataset, cfg: dict):
    fam = make_family(cfg["modulation"]["family"], cfg["modulation"]["alpha"])
    fr = cfg["framelet"]
    graphs = ds.metapath_graphs() if ds.is_hetero else [ds.graph]
    plans = [
        make_plan(normalized_laplacian(g), fam, int(fr["levels"]), float(fr["dilation"]),
                  int(cfg["chebyshev"]["degree"]), fr["cutoff"])
        for g in graphs
    ]
    return plans if ds.is_hetero else plans[0]


def build_model(ds: D.NodeDataset, plans, cfg: dict, seed: int):
    m = cfg["model"]
    args = dict(seed=seed, dropout_rate=float(m["dropout"]), variant=m["variant"])
    if ds.is_hetero:
        return HeteroModelParams.init(ds.num_features, int(m["hidden_units"]), ds.num_classes,
                                      plans, merge=m["merge"], **args)
    return NetworkParams.init(ds.num_features, int(m["hidden_units"]), ds.num_classes, plans, **args)


def train_config(cfg: dict, seed: int) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        learning_rate=float(t["learning_rate"]),
        weight_decay=float(t["weight_decay"]),
        epochs=int(t["epochs"]),
        early_stop_patience=int(t["early_stop_patience"]),
        hidden_units=int(cfg["model"]["hidden_units"]),
        seed=seed,
        freeze_filter=bool(cfg["model"]["freeze_filter"]),
    )


class NoiseInjector:
    """Applies the configured noise to a copy of the features; caches eigenvectors."""

    def __init__(self, cfg: dict, ds: D.NodeDataset):
        n = cfg["noise"]
        kind = n["kind"]
        level = n["level"]
        if isinstance(kind, str) and kind in NOISE_PRESETS:
            kind, level = NOISE_PRESETS[kind]
        if kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {kind!r}; choose from {NOISE_KINDS} or presets {sorted(NOISE_PRESETS)}")
        self.kind, self.level = kind, float(level)
        self.F = int(n["F"])
        self.per_node = bool(n["per_node"])
        if self.level < 0:
            raise ConfigError("noise.level must be non-negative")
        self._es = None
        if kind == "highfreq":
            if ds.is_hetero:
                raise ConfigError("high-frequency noise needs a homogeneous graph")
            if self.F < 1:
                raise ConfigError("noise.F must be >= 1")
            self._es = eigendecompose(normalized_laplacian(ds.graph))

    def __call__(self, X: np.ndarray, seed: int) -> np.ndarray:
        if self.kind == "binary":
            return D.inject_binary_noise(X, self.level, seed, self.per_node)
        if self.kind == "gaussian":
            return D.inject_gaussian_noise(X, self.level, seed)
        if self.kind == "highfreq":
            return D.inject_highfreq_noise(X, self._es, self.F, self.level, seed)
        return X.copy()


# -- running ------------------------------------------------------------------


RESULT_FIELDS = ["run", "seed", "accuracy", "macro_f1", "micro_f1", "wall_seconds"]
METRICS = ("accuracy", "macro_f1", "micro_f1")


@dataclass
class ExperimentResult:
    rows: list[dict] = field(default_factory=list)
    summary: dict[str, tuple[float, float]] = field(default_factory=dict)
    histories: list = field(default_factory=list)
    out_dir: Path | None = None

    def mean(self, metric: str = "accuracy") -> float:
        return self.summary[metric][0]

    def std(self, metric: str = "accuracy") -> float:
        return self.summary[metric][1]


def features_checksum(X: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(X).tobytes()).hexdigest()


def run_experiment(config, out_dir: str | Path | None = None, dataset: D.NodeDataset | None = None,
                   write: bool = True) -> ExperimentResult:
    """Train ``experiment.repeats`` models with seeds ``seed + i`` and summarise.

    ``config`` is a path or an already merged dict. The dataset is never
    modified; noise is drawn on a copy per run.
    """
    cfg = load_config(config) if isinstance(config, (str, Path)) else merge_config(config)
    ds = dataset if dataset is not None else build_dataset(cfg)
    plans = build_plans(ds, cfg)
    noise = NoiseInjector(cfg, ds)
    exp = cfg["experiment"]
    repeats, base_seed = int(exp["repeats"]), int(exp["seed"])
    if repeats < 1:
        raise ConfigError("experiment.repeats must be >= 1")

    result = ExperimentResult()
    best_model = None
    for i in range(repeats):
        seed = base_seed + i
        start = time.perf_counter()
        X = noise(ds.features, seed)
        model = build_model(ds, plans, cfg, seed)
        tdata = TrainData(X, ds.labels, ds.train_idx, ds.val_idx, ds.test_idx)
        model, history = train(model, plans, tdata, train_config(cfg, seed))
        pred = np.argmax(predict(model, plans, X), axis=1)
        metrics = D.compute_metrics(pred, ds.labels, ds.test_idx)
        elapsed = time.perf_counter() - start
        result.rows.append({
            "run": i, "seed": seed,
            "accuracy": metrics.accuracy, "macro_f1": metrics.macro_f1, "micro_f1": metrics.micro_f1,
            "wall_seconds": elapsed,
        })
        result.histories.append(history)
        if best_model is None:
            best_model = model
        log.info("run %d seed %d accuracy %.4f (%.1fs)", i, seed, metrics.accuracy, elapsed)

    for m in METRICS:
        vals = np.array([r[m] for r in result.rows])
        result.summary[m] = (float(vals.mean()), float(vals.std()))

    if write:
        out = Path(out_dir if out_dir is not None else cfg["output"]["dir"])
        out.mkdir(parents=True, exist_ok=True)
        write_results(out, result, bool(cfg["output"]["wall_time"]))
        if cfg["output"]["checkpoint"]:
            save_model(out / "model.qfm", best_model, checkpoint_metadata(cfg, ds))
        result.out_dir = out
    return result


def checkpoint_metadata(cfg: dict, ds: D.NodeDataset) -> dict:
    return {
        "dataset": ds.name,
        "num_nodes": ds.num_nodes,
        "num_features": ds.num_features,
        "num_classes": ds.num_classes,
        "config": cfg,
    }


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def write_results(out: Path, result: ExperimentResult, wall_time: bool) -> None:
    """``results.csv`` is byte-stable unless wall times are requested; timings
    always go to ``timing.csv``."""
    with (out / "results.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_FIELDS)
        for r in result.rows:
            w.writerow([
                r["run"], r["seed"], _fmt(r["accuracy"]), _fmt(r["macro_f1"]), _fmt(r["micro_f1"]),
                _fmt(r["wall_seconds"]) if wall_time else "",
            ])
    with (out / "summary.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "mean", "std"])
        for m in METRICS:
            mean, std = result.summary[m]
            w.writerow([m, _fmt(mean), _fmt(std)])
    with (out / "timing.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "wall_seconds"])
        for r in result.rows:
            w.writerow([r["run"], _fmt(r["wall_seconds"])])


def run_denoise(config, out_dir: str | Path) -> dict:
    """Run the configured noisy experiment and its clean twin; writes ``denoise.csv``."""
    cfg = load_config(config) if isinstance(config, (str, Path)) else merge_config(config)
    ds = build_dataset(cfg)
    out = Path(out_dir)
    clean_cfg = copy.deepcopy(cfg)
    clean_cfg["noise"]["kind"] = "none"
    clean = run_experiment(clean_cfg, out / "clean", dataset=ds)
    noisy = run_experiment(cfg, out / "noisy", dataset=ds)
    row = {
        "clean_accuracy": clean.mean(),
        "noisy_accuracy": noisy.mean(),
        "drop": clean.mean() - noisy.mean(),
        "noisy_std": noisy.std(),
    }
    with (out / "denoise.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(row))
        w.writerow([_fmt(v) for v in row.values()])
    return row


def alpha_sweep(config, alphas, out_dir: str | Path) -> list[dict]:
    """Accuracy against the modulation parameter; writes ``alpha_sweep.csv``."""
    cfg = load_config(config) if isinstance(config, (str, Path)) else merge_config(config)
    ds = build_dataset(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for a in alphas:
        c = copy.deepcopy(cfg)
        c["modulation"]["alpha"] = float(a)
        res = run_experiment(c, out / f"alpha_{a}", dataset=ds)
        rows.append({
            "alpha": float(a),
            "accuracy_mean": res.mean(), "accuracy_std": res.std(),
            "macro_f1_mean": res.mean("macro_f1"), "micro_f1_mean": res.mean("micro_f1"),
        })
    _write_rows(out / "alpha_sweep.csv", rows)
    return rows


def degree_sweep(config, degrees, out_dir: str | Path, trials: int = 20) -> list[dict]:
    """Chebyshev approximation error against degree; writes ``cheb_degree.csv``.

    Columns give the max interpolation error of each ``g_k`` on a 1001-point
    grid, ``max |sum_k p_k^2 - 1|``, and, when a dataset is configured, the
    median relative round-trip error of the fast transform on random signals.
    """
    cfg = load_config(config) if isinstance(config, (str, Path)) else merge_config(config)
    fam = make_family(cfg["modulation"]["family"], cfg["modulation"]["alpha"])
    ds = None
    if any(cfg["dataset"][k] for k in ("manifest", "planetoid", "synthetic")):
        ds = build_dataset(cfg)
        if ds.is_hetero:
            ds = None
    fr = cfg["framelet"]
    rows = []
    for n in degrees:
        row = {"degree": int(n)}
        for k in range(fam.K + 1):
            row[f"fit_error_g{k}"] = fit_error(fam, k, int(n))
        row["partition_error"] = partition_error(fit_filter(fam, int(n)))
        if ds is not None:
            plan = make_plan(normalized_laplacian(ds.graph), fam, int(fr["levels"]), float(fr["dilation"]), int(n))
            errs = []
            for t in range(trials):
                x = stream(int(cfg["experiment"]["seed"]), "degree-sweep", t).standard_normal((ds.num_nodes, 1))
                rec = fast_reconstruct(plan, fast_decompose(plan, x))
                errs.append(np.linalg.norm(rec - x) / np.linalg.norm(x))
            row["roundtrip_error"] = float(np.median(errs))
        rows.append(row)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "cheb_degree.csv", rows)
    return rows


def _write_rows(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(rows[0]))
        for r in rows:
            w.writerow([_fmt(v) for v in r.values()])
