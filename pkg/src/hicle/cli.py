"""Command-line entry point: gen-data, train, embed, eval, gradcheck.

Exit codes: 0 success, 1 usage/config, 2 I/O or format, 3 numeric failure.
The ``HICLE_LOG`` environment variable sets the logging level.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import gradcheck, io
from .data import (
    SyntheticSpec,
    generate_skewed,
    generate_synthetic,
    split_seen_unseen,
)
from .errors import ConfigError, FormatError, HicleError, NumericError
from .evaluation import (
    clustering_report,
    distance_violation_rate,
    map_at_r,
    topk_retrieval,
)
from .hierarchy import build_tree, paths_to_array
from .losses import LossConfig
from .model import (
    TrainConfig,
    embed,
    load_checkpoint,
    save_checkpoint,
    train,
    train_linear_probe,
)
from .sampling import SamplerConfig

log = logging.getLogger("hicle")

DEFAULT_CONFIG = {
    "seed": 0,
    # data generation
    "level_counts": [4, 3, 4],
    "samples_per_instance": 8,
    "input_dim": 32,
    "level_sigmas": [1.4, 0.6, 0.4],
    "noise_sigma": 1.0,
    "skewed": False,
    "skew_categories": 4000,
    "skew_ratio": 30.0,
    "unseen_fraction": 0.25,
    "split_fractions": [0.6, 0.2, 0.2],
    # sampler
    "batch_size": 64,
    "sampler_strategy": "hierarchical",
    "views_per_sample": 2,
    # loss
    "loss": "himulcone",
    "temperature": 0.1,
    "lambda_schedule": "exp_inv_gap",
    "positives_mode": "cumulative",
    "instance_level": True,
    "clamp_floor_stop_gradient": True,
    "skip_empty_levels": True,
    "supcon_level": 0,
    # training
    "epochs": 50,
    "base_lr": 0.1,
    "lr_decay_factor": 0.1,
    "lr_decay_every": 40,
    "momentum": 0.9,
    "aug_sigma": 0.2,
    "encoder_dims": [64, 64],
    "projection_dims": [16],
    # evaluation
    "topk_ks": [1, 5, 10],
    "num_comparisons": 10000,
    "probe_epochs": 100,
    "probe_lr": 0.5,
    "probe_level": 0,
}


def load_config(path: str | None, overrides: dict | None = None) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            user = json.load(fh)
        unknown = set(user) - set(DEFAULT_CONFIG)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(user)
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    return cfg


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        loss_kind=cfg["loss"],
        loss=LossConfig(
            temperature=cfg["temperature"],
            lambda_schedule=cfg["lambda_schedule"],
            positives_mode=cfg["positives_mode"],
            instance_level=cfg["instance_level"],
            clamp_floor_stop_gradient=cfg["clamp_floor_stop_gradient"],
            skip_empty_levels=cfg["skip_empty_levels"],
        ),
        sampler=SamplerConfig(
            batch_size=cfg["batch_size"],
            strategy=cfg["sampler_strategy"],
            seed=cfg["seed"],
            views_per_sample=cfg["views_per_sample"],
        ),
        epochs=cfg["epochs"],
        base_lr=cfg["base_lr"],
        lr_decay_factor=cfg["lr_decay_factor"],
        lr_decay_every=cfg["lr_decay_every"],
        momentum=cfg["momentum"],
        seed=cfg["seed"],
        aug_sigma=cfg["aug_sigma"],
        encoder_dims=tuple(cfg["encoder_dims"]),
        projection_dims=tuple(cfg["projection_dims"]),
        supcon_level=cfg["supcon_level"],
    )


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg["skewed"]:
        dataset = generate_skewed(
            num_categories=cfg["skew_categories"],
            max_min_ratio=cfg["skew_ratio"],
            input_dim=cfg["input_dim"],
            seed=cfg["seed"],
        )
        dataset.splits = {"train": np.arange(len(dataset.paths), dtype=np.int64)}
    else:
        spec = SyntheticSpec(
            level_counts=tuple(cfg["level_counts"]),
            samples_per_instance=cfg["samples_per_instance"],
            input_dim=cfg["input_dim"],
            level_sigmas=tuple(cfg["level_sigmas"]),
            noise_sigma=cfg["noise_sigma"],
            seed=cfg["seed"],
        )
        dataset = generate_synthetic(spec)
        dataset = split_seen_unseen(
            dataset,
            cfg["unseen_fraction"],
            cfg["seed"],
            tuple(cfg["split_fractions"]),
        )
    io.write_features(out / "features.bin", dataset.features)
    io.write_labels_csv(out / "labels.csv", dataset.paths)
    io.write_split_manifest(out / "splits.json", dataset.splits)
    log.info("wrote %d samples to %s", len(dataset.paths), out)
    return 0


def _load_dataset(data_dir: Path):
    from .data import Dataset

    features = io.read_features(data_dir / "features.bin")
    paths = io.read_labels_csv(data_dir / "labels.csv")
    splits_path = data_dir / "splits.json"
    splits = io.read_split_manifest(splits_path) if splits_path.exists() else {}
    return Dataset(features=features, paths=paths, splits=splits)


def cmd_train(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed, "loss": args.loss})
    dataset = _load_dataset(Path(args.data))
    tree = build_tree(dataset.paths)
    for key in ("seen_train", "train"):
        if key in dataset.splits:
            train_idx = dataset.splits[key]
            break
    else:
        train_idx = None
    model, logrows = train(dataset, tree, _train_config(cfg), train_idx)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out, cfg)
    io.atomic_write_text(
        out.with_suffix(".log.jsonl"),
        "".join(json.dumps(row) + "\n" for row in logrows),
    )
    log.info("trained %s for %d epochs", cfg["loss"], cfg["epochs"])
    return 0


def cmd_embed(args) -> int:
    model, _ = load_checkpoint(args.model)
    dataset = _load_dataset(Path(args.data))
    if dataset.features.shape[1] != model.encoder_layers[0][0].shape[0]:
        raise FormatError(
            f"data dimension {dataset.features.shape[1]} does not match "
            f"checkpoint input dimension {model.encoder_layers[0][0].shape[0]}"
        )
    enc, proj = embed(model, dataset.features)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_features(out / "encoder_features.bin", enc)
    io.write_features(out / "projection_features.bin", proj)
    return 0


def _split_indices(splits, name, n):
    if name == "all":
        return np.arange(n, dtype=np.int64)
    if name not in splits:
        raise FormatError(f"split {name!r} not present in the manifest")
    return splits[name]


def cmd_eval(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed})
    emb = io.read_features(args.embeddings)
    paths = io.read_labels_csv(args.labels)
    splits = (
        io.read_split_manifest(args.splits) if args.splits else {}
    )
    report: dict = {}
    warnings: list[str] = []

    if args.kind == "retrieval":
        q = _split_indices(splits, args.query_split, len(paths))
        g = _split_indices(splits, args.gallery_split, len(paths))
        labels = paths_to_array(paths)
        # finest class: one id per distinct full label path
        _, classes = np.unique(labels, axis=0, return_inverse=True)
        rep = topk_retrieval(emb[q], emb[g], classes[q], classes[g], cfg["topk_ks"])
        value, excluded = map_at_r(emb[q], emb[g], classes[q], classes[g])
        report["topk"] = {str(k): v for k, v in rep.topk.items()}
        report["map_at_r"] = value
        report["excluded_queries"] = excluded
        if rep.clamped_ks:
            warnings.append(f"k clamped to gallery size for {rep.clamped_ks}")
    elif args.kind == "nmi":
        idx = _split_indices(splits, args.query_split, len(paths))
        rep = clustering_report(emb[idx], [paths[i] for i in idx], cfg["seed"])
        report["nmi_per_level"] = rep.nmi_per_level
        if rep.excluded_categories:
            warnings.append(
                f"{rep.excluded_categories} single-label categories excluded"
            )
    elif args.kind == "violations":
        idx = _split_indices(splits, args.query_split, len(paths))
        rep = distance_violation_rate(
            emb[idx], [paths[i] for i in idx], cfg["num_comparisons"], cfg["seed"]
        )
        report["violation_rate"] = rep.violation_rate
        report["comparisons"] = rep.comparisons
        if rep.violation_rate is None:
            warnings.append("violation rate undefined: a single LCA level present")
    elif args.kind == "linear-probe":
        tr = _split_indices(splits, args.gallery_split, len(paths))
        te = _split_indices(splits, args.query_split, len(paths))
        labels = paths_to_array(paths)[:, cfg["probe_level"]]
        _, accuracy = train_linear_probe(
            emb[tr],
            labels[tr],
            emb[te],
            labels[te],
            epochs=cfg["probe_epochs"],
            base_lr=cfg["probe_lr"],
            seed=cfg["seed"],
        )
        report["accuracy"] = accuracy

    payload = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        io.atomic_write_text(args.out, payload + "\n")
    else:
        print(payload)
    for message in warnings:
        print(f"warning: {message}", file=sys.stderr)
    return 0


def cmd_gradcheck(args) -> int:
    report = gradcheck.run_suite(
        seed=args.seed or 0, inject_fault=args.inject_fault
    )
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0 if report["passed"] else 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hicle",
        description="Hierarchical multi-label contrastive learning engine",
    )
    parser.add_argument("--threads", type=int, default=None, help="worker threads")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the encoder")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--loss", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="export embeddings from a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="evaluate frozen embeddings")
    p.add_argument(
        "kind", choices=["retrieval", "nmi", "violations", "linear-probe"]
    )
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--splits", default=None)
    p.add_argument("--query-split", default="test")
    p.add_argument("--gallery-split", default="train")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", action="store_true")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("HICLE_LOG", "WARNING").upper())
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    if args.threads is not None and args.threads > 0:
        try:
            import numba

            numba.set_num_threads(args.threads)
        except ImportError:
            pass
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except HicleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
