"""Command-line experiment runner.

Subcommands: generate, preprocess, augment, train, evaluate,
study-preprocess, study-augment, study-transfer.  Exit codes: 0 ok,
1 runtime failure, 2 config error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import augment as aug
from . import metrics, model, preprocess, studies
from .core import (
    Dataset,
    clip_and_normalize,
    read_manifest,
    stratified_split,
    write_cube,
    write_manifest,
)
from .scenes import generate_cube, load_scene_config
from .studies import ConfigError, ExperimentConfig, load_config

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--jobs", type=int, default=1,
                   help="reserved; studies currently run single-process")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radarcount",
        description="Synthetic radar people-counting experiment runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic environment suites")
    _add_common(p)
    p.add_argument("--scene", help="single-scene config JSON; writes one cube")

    p = sub.add_parser("preprocess", help="apply a preprocessing method")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", default="sigmoid_weight",
                   choices=preprocess.METHODS)
    p.add_argument("--tau", type=float, default=preprocess.DEFAULT_TAU)
    p.add_argument("--steepness", type=float,
                   default=preprocess.DEFAULT_STEEPNESS)
    p.add_argument("--rank", type=int,
                   default=preprocess.DEFAULT_BACKGROUND_RANK)

    p = sub.add_parser("augment", help="augment a dataset manifest")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--augment", default="all",
                   choices=("flips", "scale", "framedrop", "all"))
    p.add_argument("--scale-lo", type=float, default=0.95)
    p.add_argument("--scale-hi", type=float, default=1.05)
    p.add_argument("--aug-seed", type=int, default=0)

    p = sub.add_parser("train", help="train a counting model")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", default=None)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a manifest")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)

    for name in ("study-preprocess", "study-augment", "study-transfer"):
        p = sub.add_parser(name, help=f"run the {name.split('-')[1]} study")
        _add_common(p)
        p.add_argument("--plot", action="store_true",
                       help="also write a static SVG plot")
    return parser


def _load_experiment_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("missing config field: --config is required")
    return load_config(args.config)


def cmd_generate(args) -> int:
    if args.scene:
        cfg = load_scene_config(args.scene)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "scene_cube.rdc"
        write_cube(generate_cube(cfg), path)
        print(f"wrote {path}")
        return EXIT_OK
    cfg = _load_experiment_config(args)
    counts = studies.generate_suite(cfg, args.out)
    for env, by_class in counts.items():
        line = " ".join(f"{cls}:{n}" for cls, n in sorted(by_class.items()))
        print(f"{env} per-class counts: {line}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    ds = read_manifest(args.manifest)
    ds = Dataset(cubes=[clip_and_normalize(c)[0] for c in ds.cubes],
                 split=ds.split)
    background = None
    if args.method == "background_suppress":
        zeros = Dataset(cubes=[c for c in ds.cubes if c.meta.label == 0])
        background = preprocess.fit_background(zeros, rank=args.rank,
                                               seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, cube in enumerate(ds.cubes):
        processed = preprocess.apply_method(
            cube, args.method, tau=args.tau, s=args.steepness,
            background=background)
        p = out / f"cube_{i:05d}.rdc"
        write_cube(processed, p)
        paths.append(p.name)
    write_manifest(ds, paths, out / "manifest.jsonl")
    print(f"preprocessed {len(paths)} cubes with {args.method}")
    return EXIT_OK


def cmd_augment(args) -> int:
    ds = read_manifest(args.manifest)
    spec = aug.AugmentSpec(
        flips=("azimuth", "range", "both") if args.augment in ("flips", "all")
        else (),
        scale=args.augment in ("scale", "all"),
        scale_range=(args.scale_lo, args.scale_hi),
        frame_drop=args.augment in ("framedrop", "all"),
        seed=args.aug_seed,
    )
    augmented = aug.augment_dataset(ds, spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, cube in enumerate(augmented.cubes):
        p = out / f"cube_{i:05d}.rdc"
        write_cube(cube, p)
        paths.append(p.name)
    write_manifest(augmented, paths, out / "manifest.jsonl")
    print(f"augmented {len(ds)} cubes to {len(augmented)}")
    return EXIT_OK


def cmd_train(args) -> int:
    ds = read_manifest(args.manifest)
    if ds.split is None or "train" not in ds.split:
        ds = stratified_split(ds, studies.SPLIT_FRACTIONS, args.seed)
    net = model.CountModel.init(seed=args.seed)
    net, history = model.train(net, ds, model.TrainConfig(seed=args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "model.rcm"
    model.save_checkpoint(net, ckpt)
    model.save_history(history, out / "history.csv")
    print(f"trained {len(history)} epochs; checkpoint at {ckpt}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ds = read_manifest(args.manifest)
    net = model.load_checkpoint(args.checkpoint)
    cubes = ds.cubes
    if ds.split is not None and "test" in ds.split:
        cubes = ds.subset("test").cubes
    preds = model.predict_batch(net, cubes)
    labels = np.array([c.meta.label for c in cubes], dtype=float)
    rep = metrics.rmse_mae(preds, labels)
    print(f"n={rep.n} rmse={rep.rmse:.4f} mae={rep.mae:.4f}")
    return EXIT_OK


def _plot_transfer(result: dict, out: Path) -> None:
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    sizes = [k for k in result["medians"] if k != "no_transfer"]
    values = [result["medians"][k] for k in sizes]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.axhline(result["medians"]["no_transfer"], ls="--", color="gray",
               label="no transfer")
    ax.plot(sizes, values, marker="o", label="fine-tuned")
    ax.set_xlabel("target training samples")
    ax.set_ylabel("median RMSE")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "transfer.svg")
    plt.close(fig)


def cmd_study(args, which: str) -> int:
    cfg = _load_experiment_config(args)
    out = Path(args.out)
    if which == "preprocess":
        studies.run_preprocess_study(cfg, out)
        print(f"wrote {out / 'performance.csv'} and {out / 'separability.csv'}")
    elif which == "augment":
        studies.run_augment_study(cfg, out)
        print(f"wrote {out / 'augmentation.csv'}")
    else:
        result = studies.run_transfer_study(cfg, out)
        for w in result["warnings"]:
            print(w, file=sys.stderr)
        if args.plot:
            _plot_transfer(result, out)
        print(f"wrote {out / 'transfer.csv'}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "generate": cmd_generate,
        "preprocess": cmd_preprocess,
        "augment": cmd_augment,
        "train": cmd_train,
        "evaluate": cmd_evaluate,
        "study-preprocess": lambda a: cmd_study(a, "preprocess"),
        "study-augment": lambda a: cmd_study(a, "augment"),
        "study-transfer": lambda a: cmd_study(a, "transfer"),
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
