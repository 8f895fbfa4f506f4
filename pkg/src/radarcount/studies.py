"""Experiment runners composing the full pipeline into cross-environment
study designs: preprocessing comparison, augmentation comparison, and
transfer learning across target-sample budgets.

Every study is a pure function of its config: reruns produce byte-identical
CSVs (fixed float formatting, no timestamps, content-hashed test splits).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import augment as aug
from . import metrics, model, preprocess
from .core import Dataset, clip_and_normalize, stratified_split, write_cube, write_manifest
from .scenes import make_environment_suite

SPLIT_FRACTIONS = (0.54, 0.06, 0.40)  # train/val/test geometry

PREPROCESS_METHODS = (
    "none",
    "threshold_zero",
    "sigmoid_weight",
    "butterworth_bandpass",
    "two_stage_highpass",
    "background_suppress",  # low-rank equivalent of learned suppression
)

AUGMENT_VARIANTS = ("none", "flips", "scaling", "framedrop")


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    n_per_class: int
    seeds: tuple
    n_per_class_c: int = 250
    scene_seed: int = 0
    method: str = "sigmoid_weight"
    tau: float = preprocess.DEFAULT_TAU
    s: float = preprocess.DEFAULT_STEEPNESS
    rank: int = preprocess.DEFAULT_BACKGROUND_RANK
    augment_seed: int = 0
    scale_lo: float = 0.95
    scale_hi: float = 1.05
    lr: float = model.BASE_LR
    max_epochs: int = 100
    patience: int = 10
    batch: int = 32
    transfer_sizes: tuple = (100, 200, 400, 540)
    kmeans_restarts: int = 4

    def __post_init__(self):
        if len(self.seeds) < 1:
            raise ConfigError("seeds must contain at least one seed")
        sizes = tuple(self.transfer_sizes)
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError("transfer sizes must be strictly increasing")
        if self.method not in preprocess.METHODS:
            raise ConfigError(f"unknown preprocessing method {self.method!r}")


REQUIRED_CONFIG_FIELDS = ("n_per_class", "seeds")


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    for key in REQUIRED_CONFIG_FIELDS:
        if key not in raw:
            raise ConfigError(f"missing config field: {key}")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    raw["seeds"] = tuple(raw["seeds"])
    if "transfer_sizes" in raw:
        raw["transfer_sizes"] = tuple(raw["transfer_sizes"])
    return ExperimentConfig(**raw)


def _normalize_all(ds: Dataset) -> Dataset:
    return Dataset(cubes=[clip_and_normalize(c)[0] for c in ds.cubes],
                   split=ds.split)


def _preprocess_all(ds: Dataset, method: str, cfg: ExperimentConfig,
                    background=None) -> Dataset:
    cubes = [preprocess.apply_method(c, method, tau=cfg.tau, s=cfg.s,
                                     background=background)
             for c in ds.cubes]
    return Dataset(cubes=cubes, split=ds.split)


def _fit_background_from_train(ds_a: Dataset, cfg: ExperimentConfig):
    train = ds_a.subset("train")
    zeros = Dataset(cubes=[c for c in train.cubes if c.meta.label == 0])
    return preprocess.fit_background(zeros, rank=cfg.rank, seed=cfg.scene_seed)


def dataset_hash(ds: Dataset) -> str:
    """Content hash of cube payloads and labels (split identity check)."""
    h = hashlib.sha256()
    for cube in ds.cubes:
        h.update(np.ascontiguousarray(cube.amplitudes, dtype="<f4").tobytes())
        h.update(bytes([cube.meta.label]))
    return h.hexdigest()[:16]


def _train_and_eval(ds_a: Dataset, test_sets: dict, seed: int,
                    cfg: ExperimentConfig):
    """Train on A' splits, return {name: RegressionReport} plus the model."""
    net = model.CountModel.init(seed=seed)
    tcfg = model.TrainConfig(lr=cfg.lr, max_epochs=cfg.max_epochs,
                             patience=cfg.patience, batch=cfg.batch,
                             seed=seed)
    net, _ = model.train(net, ds_a, tcfg)
    reports = {}
    for name, ds in test_sets.items():
        preds = model.predict_batch(net, ds.cubes)
        reports[name] = metrics.rmse_mae(preds, ds.labels().astype(float))
    return net, reports


def _median(values) -> float:
    return float(np.median(np.asarray(values, dtype=float)))


def generate_suite(cfg: ExperimentConfig, out_dir) -> dict:
    """Write the three environment datasets as cube files plus manifests.

    Returns per-environment, per-class sample counts.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds_a, ds_b, ds_c = make_environment_suite(
        cfg.scene_seed, cfg.n_per_class, cfg.n_per_class_c)
    counts = {}
    for env_name, ds in (("Aprime", ds_a), ("Bprime", ds_b), ("Cprime", ds_c)):
        env_dir = out / env_name
        env_dir.mkdir(exist_ok=True)
        paths = []
        for i, cube in enumerate(ds.cubes):
            p = env_dir / f"cube_{i:05d}.rdc"
            write_cube(cube, p)
            paths.append(p.relative_to(out))
        write_manifest(ds, paths, out / f"{env_name}.manifest.jsonl")
        labels = ds.labels()
        counts[env_name] = {int(c): int((labels == c).sum())
                            for c in np.unique(labels)}
    return counts


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    Path(path).write_text(buf.getvalue())


def _fmt(x) -> str:
    return "" if x is None else f"{x:.6f}"


def run_preprocess_study(cfg: ExperimentConfig, out_dir) -> dict:
    """Train one model per preprocessing method on A', evaluate on A'-test
    and B', and run the clustering separability suite.  Emits
    performance.csv and separability.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_method = {m: {"rmse_a": [], "mae_a": [], "rmse_b": [], "mae_b": []}
                  for m in PREPROCESS_METHODS}
    sep_acc = {m: {} for m in PREPROCESS_METHODS if m != "background_suppress"}
    test_hashes = set()
    for seed in cfg.seeds:
        ds_a, ds_b, _ = make_environment_suite(cfg.scene_seed + seed,
                                               cfg.n_per_class,
                                               n_per_class_c=1)
        ds_a = _normalize_all(ds_a)
        ds_b = _normalize_all(ds_b)
        ds_a = stratified_split(ds_a, SPLIT_FRACTIONS, seed)
        test_hashes.add(dataset_hash(ds_a.subset("test")))
        background = _fit_background_from_train(ds_a, cfg)
        for method in PREPROCESS_METHODS:
            pa = _preprocess_all(ds_a, method, cfg, background)
            pb = _preprocess_all(ds_b, method, cfg, background)
            _, reports = _train_and_eval(
                pa, {"a": pa.subset("test"), "b": pb}, seed, cfg)
            per_method[method]["rmse_a"].append(reports["a"].rmse)
            per_method[method]["mae_a"].append(reports["a"].mae)
            per_method[method]["rmse_b"].append(reports["b"].rmse)
            per_method[method]["mae_b"].append(reports["b"].mae)
            if method in sep_acc:
                for rep in metrics.separability_suite(
                        Dataset(cubes=ds_a.cubes), method, seed=seed,
                        restarts=cfg.kmeans_restarts, tau=cfg.tau, s=cfg.s):
                    sep_acc[method].setdefault(rep.labeling, []).append(rep)
    med = {m: {k: _median(v) for k, v in agg.items()}
           for m, agg in per_method.items()}
    base = med["none"]
    rows = []
    for m in PREPROCESS_METHODS:
        label = "background_suppress_lowrank" if m == "background_suppress" else m
        rows.append([
            label,
            _fmt(med[m]["rmse_a"]), _fmt(med[m]["mae_a"]),
            _fmt(med[m]["rmse_b"]), _fmt(med[m]["mae_b"]),
            _fmt(metrics.improvement_pct(base["rmse_b"], med[m]["rmse_b"])),
            _fmt(metrics.improvement_pct(base["mae_b"], med[m]["mae_b"])),
        ])
    _write_csv(out / "performance.csv",
               ["method", "rmse_a", "mae_a", "rmse_b", "mae_b",
                "rmse_improvement_pct", "mae_improvement_pct"], rows)
    sep_rows = []
    for m, by_label in sep_acc.items():
        for labeling, reps in by_label.items():
            sep_rows.append([
                m, labeling,
                _fmt(_median([r.ami_before for r in reps])),
                _fmt(_median([r.ami_after for r in reps])),
                _fmt(_median([r.fisher_before for r in reps])),
                _fmt(_median([r.fisher_after for r in reps])),
            ])
    _write_csv(out / "separability.csv",
               ["method", "labeling", "ami_before", "ami_after",
                "fisher_before", "fisher_after"], sep_rows)
    return {"performance": med, "test_hashes": sorted(test_hashes)}


def _augmented_train_set(ds_a: Dataset, variant: str,
                         cfg: ExperimentConfig) -> Dataset:
    train = ds_a.subset("train")
    if variant == "none":
        return train
    if variant == "flips":
        spec = aug.AugmentSpec(flips=("azimuth", "range", "both"),
                               seed=cfg.augment_seed)
    elif variant == "scaling":
        spec = aug.AugmentSpec(scale=True,
                               scale_range=(cfg.scale_lo, cfg.scale_hi),
                               seed=cfg.augment_seed)
    elif variant == "framedrop":
        spec = aug.AugmentSpec(frame_drop=True, seed=cfg.augment_seed)
    else:
        raise ConfigError(f"unknown augmentation variant {variant!r}")
    return aug.augment_dataset(train, spec)


def run_augment_study(cfg: ExperimentConfig, out_dir) -> dict:
    """Train with each augmentation variant on A', evaluate on the shared
    B' test set.  Emits augmentation.csv (baseline row first)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    agg = {v: {"rmse_a": [], "mae_a": [], "rmse_b": [], "mae_b": []}
           for v in AUGMENT_VARIANTS}
    b_hashes = set()
    for seed in cfg.seeds:
        ds_a, ds_b, _ = make_environment_suite(cfg.scene_seed + seed,
                                               cfg.n_per_class,
                                               n_per_class_c=1)
        ds_a = _normalize_all(ds_a)
        ds_b = _normalize_all(ds_b)
        ds_a = stratified_split(ds_a, SPLIT_FRACTIONS, seed)
        b_hashes.add(dataset_hash(ds_b))
        val = ds_a.subset("val")
        test_a = ds_a.subset("test")
        x_val = model.features_matrix(val.cubes)
        for variant in AUGMENT_VARIANTS:
            train_set = _augmented_train_set(ds_a, variant, cfg)
            net = model.CountModel.init(seed=seed)
            tcfg = model.TrainConfig(lr=cfg.lr, max_epochs=cfg.max_epochs,
                                     patience=cfg.patience, batch=cfg.batch,
                                     seed=seed)
            net, _ = model.train_features(
                net, model.features_matrix(train_set.cubes),
                train_set.labels().astype(float),
                x_val, val.labels().astype(float), tcfg)
            ra = metrics.rmse_mae(model.predict_batch(net, test_a.cubes),
                                  test_a.labels().astype(float))
            rb = metrics.rmse_mae(model.predict_batch(net, ds_b.cubes),
                                  ds_b.labels().astype(float))
            agg[variant]["rmse_a"].append(ra.rmse)
            agg[variant]["mae_a"].append(ra.mae)
            agg[variant]["rmse_b"].append(rb.rmse)
            agg[variant]["mae_b"].append(rb.mae)
    test_hash = ",".join(sorted(b_hashes))
    rows = []
    for v in AUGMENT_VARIANTS:
        rows.append([v,
                     _fmt(_median(agg[v]["rmse_a"])),
                     _fmt(_median(agg[v]["mae_a"])),
                     _fmt(_median(agg[v]["rmse_b"])),
                     _fmt(_median(agg[v]["mae_b"])),
                     test_hash])
    _write_csv(out / "augmentation.csv",
               ["variant", "rmse_a", "mae_a", "rmse_b", "mae_b",
                "test_set_hash"], rows)
    return {"results": agg, "b_hashes": sorted(b_hashes)}


def run_transfer_study(cfg: ExperimentConfig, out_dir) -> dict:
    """Pretrain on A' (sigmoid weighting), fine-tune on C' subsets, and
    evaluate every row on the same held-out C' test split.  Emits
    transfer.csv with medians and min/max over seeds."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows_acc = {"no_transfer": {"rmse_a": [], "mae_a": [], "rmse_c": [],
                                "mae_c": []}}
    for size in cfg.transfer_sizes:
        rows_acc[size] = {"rmse_c": [], "mae_c": []}
    c_hashes = set()
    for seed in cfg.seeds:
        ds_a, _, ds_c = make_environment_suite(cfg.scene_seed + seed,
                                               cfg.n_per_class,
                                               cfg.n_per_class_c)
        ds_a = _normalize_all(ds_a)
        ds_c = _normalize_all(ds_c)
        ds_a = stratified_split(ds_a, SPLIT_FRACTIONS, seed)
        ds_c = stratified_split(ds_c, SPLIT_FRACTIONS, seed + 1)
        pa = _preprocess_all(ds_a, cfg.method, cfg)
        pc = _preprocess_all(ds_c, cfg.method, cfg)
        test_c = pc.subset("test")
        c_hashes.add(dataset_hash(test_c))
        max_size = max(cfg.transfer_sizes)
        if max_size > len(pc.subset("train")):
            raise ConfigError(
                f"transfer size {max_size} exceeds C' train pool of "
                f"{len(pc.subset('train'))}")
        net, reports = _train_and_eval(
            pa, {"a": pa.subset("test"), "c": test_c}, seed, cfg)
        rows_acc["no_transfer"]["rmse_a"].append(reports["a"].rmse)
        rows_acc["no_transfer"]["mae_a"].append(reports["a"].mae)
        rows_acc["no_transfer"]["rmse_c"].append(reports["c"].rmse)
        rows_acc["no_transfer"]["mae_c"].append(reports["c"].mae)
        ft_cfg = model.TrainConfig(lr=model.FINE_TUNE_LR,
                                   max_epochs=cfg.max_epochs,
                                   patience=cfg.patience, batch=cfg.batch,
                                   seed=seed)
        for size in cfg.transfer_sizes:
            tuned, _ = model.fine_tune(net, pc, size, ft_cfg)
            rep = metrics.rmse_mae(model.predict_batch(tuned, test_c.cubes),
                                   test_c.labels().astype(float))
            rows_acc[size]["rmse_c"].append(rep.rmse)
            rows_acc[size]["mae_c"].append(rep.mae)
    header = ["method", "rmse_a", "mae_a", "rmse_c_median", "rmse_c_min",
              "rmse_c_max", "mae_c_median", "mae_c_min", "mae_c_max"]
    nt = rows_acc["no_transfer"]
    rows = [[
        "no_transfer",
        _fmt(_median(nt["rmse_a"])), _fmt(_median(nt["mae_a"])),
        _fmt(_median(nt["rmse_c"])), _fmt(min(nt["rmse_c"])),
        _fmt(max(nt["rmse_c"])), _fmt(_median(nt["mae_c"])),
        _fmt(min(nt["mae_c"])), _fmt(max(nt["mae_c"])),
    ]]
    medians = {"no_transfer": _median(nt["rmse_c"])}
    prev = None
    warnings = []
    for size in cfg.transfer_sizes:
        r = rows_acc[size]
        med = _median(r["rmse_c"])
        medians[size] = med
        if prev is not None and med > prev:
            warnings.append(
                f"warning: median RMSE not monotone at size {size}")
        prev = med
        rows.append([
            f"transfer_{size}", "", "",
            _fmt(med), _fmt(min(r["rmse_c"])), _fmt(max(r["rmse_c"])),
            _fmt(_median(r["mae_c"])), _fmt(min(r["mae_c"])),
            _fmt(max(r["mae_c"])),
        ])
    _write_csv(out / "transfer.csv", header, rows)
    return {"medians": medians, "warnings": warnings,
            "c_hashes": sorted(c_hashes), "raw": rows_acc}
