"""Command-line pipeline driver.

Each subcommand reads product data (and optionally a JSON config file),
runs one stage of the pipeline, and writes its artifacts plus a manifest
into the --out directory.  Flags override config-file values; config
files may only contain known keys.  Exit codes: 0 success, 1 validation
failure, 2 I/O failure.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .backend import active_backend
from .baseline import predict_logreg, train_logreg
from .errors import PhyloForecastError, ValidationError
from .features import fit_pca, make_split_masks, transform_pca, write_masks_csv
from .graph import build_fcpn, export_graph, phylo_tree, scaled_laplacian, write_edges_csv
from .jsonio import dump_json, load_json
from .labeling import (
    detect_dominant_genotypes,
    dominance_statistics,
    label_dominant_products,
    write_genotypes_csv,
    write_labels_csv,
)
from .metrics import ObjectiveWeights, evaluate_predictions
from .model import load_checkpoint, save_checkpoint
from .panel import build_vocabulary, encode_chromosomes, load_products, write_products_csv
from .synth import PlantedDominant, SynthConfig, benchmark_config, generate_panel
from .training import TrainConfig, predict, run_multi_seed, write_predictions_csv

DEFAULTS = {
    "input": None,
    "format": None,
    "theta": 0.5,
    "rho": 0.95,
    "tree_threshold": 0.0,
    "split_years": None,
    "hidden_size": 32,
    "pooled_size": 32,
    "cheb_order": 2,
    "generations": 3,
    "activation": "identity",
    "learning_rate": 0.01,
    "max_epochs": 500,
    "patience": 50,
    "weights": [0.5, 0.1, 0.1, 0.1, 0.2, 0.0],
    "sw_mode": "soft",
    "class_weighting": True,
    "seeds": [0],
    "l2": 1e-4,
    "baseline_class_weighting": False,
    "synth": None,
}

_SYNTH_KEYS = {
    "years", "products_per_year", "founder_genome_size", "mutation_rate",
    "vertical_fraction", "hgt_rate", "theta", "planted", "package_size",
    "herald_size", "seed", "start_year",
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _parse_years(text):
    parts = [p for p in str(text).split(",") if p.strip()]
    if len(parts) != 3:
        raise ValidationError(f"--years needs three comma-separated counts, got {text!r}")
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise ValidationError(f"--years values must be integers, got {text!r}") from None


def _parse_seeds(text):
    text = str(text).strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(p) for p in text.split(",") if p.strip()]


def _load_config_file(path) -> dict:
    try:
        doc = load_json(path)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path}: invalid JSON ({exc.msg})") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"config file {path} must hold a JSON object")
    unknown = set(doc) - set(DEFAULTS)
    if unknown:
        raise ValidationError(
            f"config file {path} has unknown keys: {', '.join(sorted(unknown))}"
        )
    if doc.get("synth") is not None:
        bad = set(doc["synth"]) - _SYNTH_KEYS
        if bad:
            raise ValidationError(
                f"config file {path} has unknown synth keys: {', '.join(sorted(bad))}"
            )
    return doc


def _resolve_config(args) -> dict:
    """defaults <- config file <- explicit flags."""
    config = dict(DEFAULTS)
    if getattr(args, "config", None):
        config.update(_load_config_file(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    return config


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir, command, config, inputs):
    digests = {}
    for role, path in inputs.items():
        if path:
            digests[role] = {"path": str(path), "sha256": _sha256(path)}
    dump_json(
        {
            "tool": "phylo-forecast",
            "version": __version__,
            "backend": active_backend(),
            "command": command,
            "config": {k: v for k, v in config.items() if v is not None},
            "inputs": digests,
        },
        os.path.join(out_dir, "manifest.json"),
    )


def _prepare_out(args) -> str:
    out = args.out
    os.makedirs(out, exist_ok=True)
    return out


def _load_panel(config):
    if not config.get("input"):
        raise ValidationError("an --input products file is required")
    records = load_products(config["input"], config.get("format"))
    vocab = build_vocabulary(records)
    return records, vocab, encode_chromosomes(records, vocab)


def _cmd_ingest(args):
    config = _resolve_config(args)
    out = _prepare_out(args)
    records, vocab, chrom = _load_panel(config)
    write_products_csv(records, os.path.join(out, "products.csv"))
    _write_manifest(out, "ingest", config, {"input": config["input"], "config": args.config})
    years = chrom.distinct_years()
    print(
        f"ingested {len(records)} products, {len(vocab)} genotypes, "
        f"{len(years)} years ({years[0]}-{years[-1]}) -> {out}"
    )
    return 0


def _cmd_graph(args):
    config = _resolve_config(args)
    out = _prepare_out(args)
    _, _, chrom = _load_panel(config)
    network = build_fcpn(chrom)
    export_graph(network, out)
    tree = phylo_tree(network, config["tree_threshold"])
    write_edges_csv(tree.edges, os.path.join(out, "tree_edges.csv"))
    _write_manifest(out, "graph", config, {"input": config["input"], "config": args.config})
    print(
        f"graph: {network.num_nodes} nodes, {network.num_edges} network edges, "
        f"{len(tree.edges)} tree edges -> {out}"
    )
    return 0


def _label_artifacts(config):
    records, vocab, chrom = _load_panel(config)
    dossiers = detect_dominant_genotypes(chrom, config["theta"])
    labels = label_dominant_products(chrom, dossiers)
    stats = dominance_statistics(dossiers, labels, chrom, config["theta"])
    return vocab, chrom, dossiers, labels, stats


def _cmd_label(args):
    config = _resolve_config(args)
    out = _prepare_out(args)
    vocab, chrom, dossiers, labels, stats = _label_artifacts(config)
    write_genotypes_csv(dossiers, vocab, os.path.join(out, "genotypes.csv"))
    write_labels_csv(labels, chrom, os.path.join(out, "labels.csv"))
    dump_json(stats, os.path.join(out, "stats.json"))
    _write_manifest(out, "label", config, {"input": config["input"], "config": args.config})
    dominant_genotypes = sum(1 for d in dossiers if d.dominant)
    print(
        f"labeled {labels.num_dominant} dominant products, "
        f"{dominant_genotypes} dominant genotypes at theta={config['theta']} -> {out}"
    )
    return 0


def _cmd_stats(args):
    config = _resolve_config(args)
    out = _prepare_out(args)
    _, _, _, labels, stats = _label_artifacts(config)
    dump_json(stats, os.path.join(out, "stats.json"))
    _write_manifest(out, "stats", config, {"input": config["input"], "config": args.config})
    print(f"stats for {len(labels.d)} products at theta={config['theta']} -> {out}")
    return 0


def _cmd_split(args):
    config = _resolve_config(args)
    out = _prepare_out(args)
    if not config.get("split_years"):
        raise ValidationError("--years a,b,c is required")
    _, _, chrom = _load_panel(config)
    masks = make_split_masks(chrom, config["split_years"])
    write_masks_csv(masks, os.path.join(out, "masks.csv"))
    _write_manifest(out, "split", config, {"input": config["input"], "config": args.config})
    print(
        f"split {masks.years}: {int(masks.train.sum())} train, "
        f"{int(masks.val.sum())} val, {int(masks.test.sum())} test -> {out}"
    )
    return 0


def _pipeline(config):
    """Shared data preparation for train/evaluate/baseline."""
    records, vocab, chrom = _load_panel(config)
    dossiers = detect_dominant_genotypes(chrom, config["theta"])
    labels = label_dominant_products(chrom, dossiers)
    if not config.get("split_years"):
        raise ValidationError("split years (a,b,c) are required")
    masks = make_split_masks(chrom, config["split_years"])
    return records, vocab, chrom, labels, masks


def _train_config(config, seed=0) -> TrainConfig:
    return TrainConfig(
        learning_rate=config["learning_rate"],
        max_epochs=config["max_epochs"],
        patience=config["patience"],
        seed=seed,
        split_years=tuple(config["split_years"]),
        theta=config["theta"],
        rho=config["rho"],
        hidden_size=config["hidden_size"],
        pooled_size=config["pooled_size"],
        cheb_order=config["cheb_order"],
        generations=config["generations"],
        weights=ObjectiveWeights.from_sequence(config["weights"]),
        sw_mode=config["sw_mode"],
        class_weighting=config["class_weighting"],
        activation=config["activation"],
    )


def _cmd_train(args):
    config = _resolve_config(args)
    out = _prepare_out(args)
    _, vocab, chrom, labels, masks = _pipeline(config)
    network = build_fcpn(chrom)
    pca = fit_pca(chrom, config["rho"])
    features = transform_pca(pca, chrom)
    train_config = _train_config(config)
    seeds = config["seeds"]
    report = run_multi_seed(
        network, features, labels.d, masks, train_config, seeds, keep_models=True
    )
    for seed, model in report.models.items():
        save_checkpoint(
            os.path.join(out, f"checkpoint_seed{seed}.json"),
            model,
            pca,
            vocab.digest(),
            {"rho": config["rho"], "theta": config["theta"], "seed": seed},
        )
    dump_json(report.to_dict(), os.path.join(out, "runs.json"))
    _write_manifest(out, "train", config, {"input": config["input"], "config": args.config})
    avg = report.averages
    summary = (
        f"TPR {avg['TPR']:.3f}, accuracy {avg['accuracy']:.3f}" if avg else "no successful seeds"
    )
    print(f"trained {len(report.runs)}/{len(seeds)} seeds; test {summary} -> {out}")
    return 0


def _restore(config, checkpoint_path):
    """Load a checkpoint and rebuild everything prediction needs."""
    model, pca, digest, ckpt_config = load_checkpoint(checkpoint_path)
    if pca is None:
        raise ValidationError(f"checkpoint {checkpoint_path} lacks a PCA model")
    records, vocab, chrom = _load_panel(config)
    if digest and vocab.digest() != digest:
        raise ValidationError(
            "input vocabulary does not match the checkpoint's vocabulary digest"
        )
    theta = ckpt_config.get("theta", config["theta"])
    dossiers = detect_dominant_genotypes(chrom, theta)
    labels = label_dominant_products(chrom, dossiers)
    network = build_fcpn(chrom)
    laplacian = scaled_laplacian(network.weights)
    features = transform_pca(pca, chrom)
    return model, chrom, labels, laplacian, features, theta, ckpt_config


def _split_mask(config, chrom, which):
    if which == "all":
        return None
    if not config.get("split_years"):
        raise ValidationError(f"--years a,b,c is required for --split {which}")
    masks = make_split_masks(chrom, config["split_years"])
    return {"train": masks.train, "val": masks.val, "test": masks.test}[which]


def _cmd_predict(args):
    config = _resolve_config(args)
    out = _prepare_out(args)
    model, chrom, labels, laplacian, features, _, _ = _restore(config, args.checkpoint)
    mask = _split_mask(config, chrom, args.split)
    idx, probs, hard = predict(model, laplacian.l_tilde, features, mask)
    write_predictions_csv(
        os.path.join(out, "predictions.csv"),
        idx, probs, hard, labels.d, chrom.product_ids, chrom.years,
    )
    _write_manifest(
        out, "predict", config,
        {"input": config["input"], "config": args.config, "checkpoint": args.checkpoint},
    )
    print(f"predicted {len(idx)} nodes ({int(hard.sum())} positive) -> {out}")
    return 0


def _cmd_evaluate(args):
    config = _resolve_config(args)
    out = _prepare_out(args)
    model, chrom, labels, laplacian, features, theta, ckpt_config = _restore(
        config, args.checkpoint
    )
    mask = _split_mask(config, chrom, args.split)
    idx, probs, hard = predict(model, laplacian.l_tilde, features, mask)
    weights = ObjectiveWeights.from_sequence(config["weights"])
    a, b = (config["split_years"][0], config["split_years"][1]) if config.get("split_years") else (0, 0)
    record = evaluate_predictions(
        labels.d, _full_probs(probs, idx, len(labels.d)), mask,
        weights=weights,
        extra={
            "threshold": theta,
            "train_years": a,
            "val_years": b,
            "seed": ckpt_config.get("seed", 0),
        },
    )
    from .training import _average_runs

    dump_json(
        {"runs": [record], "averages": _average_runs([record])},
        os.path.join(out, "metrics.json"),
    )
    write_predictions_csv(
        os.path.join(out, "predictions.csv"),
        idx, probs, hard, labels.d, chrom.product_ids, chrom.years,
    )
    _write_manifest(
        out, "evaluate", config,
        {"input": config["input"], "config": args.config, "checkpoint": args.checkpoint},
    )
    print(
        f"evaluate --split {args.split}: accuracy {record['accuracy']:.3f}, "
        f"TPR {record['TPR']:.3f} -> {out}"
    )
    return 0


def _full_probs(probs, idx, n):
    full = np.zeros(n)
    full[idx] = probs
    return full


def _cmd_baseline(args):
    config = _resolve_config(args)
    out = _prepare_out(args)
    _, _, chrom, labels, masks = _pipeline(config)
    model = train_logreg(
        chrom, labels.d, masks.train,
        l2=config["l2"],
        class_weighting=config["baseline_class_weighting"],
    )
    idx, probs, hard = predict_logreg(model, chrom, masks.test)
    weights = ObjectiveWeights.from_sequence(config["weights"])
    record = evaluate_predictions(
        labels.d, _full_probs(probs, idx, len(labels.d)), masks.test,
        weights=weights,
        extra={
            "threshold": config["theta"],
            "train_years": config["split_years"][0],
            "val_years": config["split_years"][1],
            "seed": 0,
        },
    )
    from .training import _average_runs

    dump_json(
        {"runs": [record], "averages": _average_runs([record])},
        os.path.join(out, "metrics.json"),
    )
    write_predictions_csv(
        os.path.join(out, "predictions.csv"),
        idx, probs, hard, labels.d, chrom.product_ids, chrom.years,
    )
    _write_manifest(out, "baseline", config, {"input": config["input"], "config": args.config})
    print(
        f"baseline: accuracy {record['accuracy']:.3f}, TPR {record['TPR']:.3f} -> {out}"
    )
    return 0


def _synth_config(config, seed) -> SynthConfig:
    doc = config.get("synth")
    if doc is None:
        return benchmark_config(seed if seed is not None else 0)
    doc = dict(doc)
    if seed is not None:
        doc["seed"] = seed
    planted = tuple(
        PlantedDominant(int(birth), tuple(float(v) for v in schedule))
        for birth, schedule in doc.pop("planted", [])
    )
    return SynthConfig(planted=planted, **doc)


def _cmd_synth(args):
    config = _resolve_config(args)
    out = _prepare_out(args)
    synth_config = _synth_config(config, args.seed)
    records, truth = generate_panel(synth_config)
    write_products_csv(records, os.path.join(out, "products.csv"))
    dump_json(truth, os.path.join(out, "truth.json"))
    _write_manifest(out, "synth", config, {"config": args.config})
    dominant = sum(truth["labels"].values())
    print(
        f"synthesized {len(records)} products over {synth_config.years} years "
        f"({dominant} dominant) -> {out}"
    )
    return 0


def _add_common(parser, out_required=True):
    parser.add_argument("--input", "-i", help="products file (CSV or JSONL)")
    parser.add_argument("--format", choices=["csv", "jsonl"], help="input format")
    parser.add_argument("--config", "-c", help="JSON config file")
    parser.add_argument("--out", "-o", required=out_required, help="output directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="phylo-forecast", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and canonicalize a products file")
    _add_common(p)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("graph", help="build and export the phylogenetic network and tree")
    _add_common(p)
    p.add_argument("--tree-threshold", type=float, dest="tree_threshold")
    p.set_defaults(func=_cmd_graph)

    p = sub.add_parser("label", help="dominance dossiers, product labels, statistics")
    _add_common(p)
    p.add_argument("--threshold", type=float, dest="theta")
    p.set_defaults(func=_cmd_label)

    p = sub.add_parser("stats", help="dominance statistics only")
    _add_common(p)
    p.add_argument("--threshold", type=float, dest="theta")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("split", help="chronological train/val/test masks")
    _add_common(p)
    p.add_argument("--years", type=_parse_years, dest="split_years")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="train the predictor over one or more seeds")
    _add_common(p)
    p.add_argument("--threshold", type=float, dest="theta")
    p.add_argument("--rho", type=float)
    p.add_argument("--years", type=_parse_years, dest="split_years")
    p.add_argument("--seeds", type=_parse_seeds)
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--epochs", type=int, dest="max_epochs")
    p.add_argument("--patience", type=int)
    p.add_argument("--hidden", type=int, dest="hidden_size")
    p.add_argument("--pooled", type=int, dest="pooled_size")
    p.add_argument("--order", type=int, dest="cheb_order")
    p.add_argument("--activation", choices=["identity", "tanh", "relu"])
    p.add_argument("--sw-mode", choices=["soft", "hard"], dest="sw_mode")
    p.add_argument(
        "--class-weighting", action=argparse.BooleanOptionalAction,
        dest="class_weighting", default=None,
    )
    p.add_argument(
        "--weights",
        type=lambda s: [float(v) for v in s.split(",")],
        help="six objective weights, comma separated",
    )
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="probabilities from a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "val", "test", "all"], default="all")
    p.add_argument("--years", type=_parse_years, dest="split_years")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="metrics for a checkpoint on one split")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "val", "test", "all"], default="test")
    p.add_argument("--years", type=_parse_years, dest="split_years")
    p.add_argument(
        "--weights", type=lambda s: [float(v) for v in s.split(",")],
    )
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("baseline", help="logistic-regression baseline on raw chromosomes")
    _add_common(p)
    p.add_argument("--threshold", type=float, dest="theta")
    p.add_argument("--years", type=_parse_years, dest="split_years")
    p.add_argument("--l2", type=float)
    p.add_argument(
        "--class-weighting", action=argparse.BooleanOptionalAction,
        dest="baseline_class_weighting", default=None,
    )
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("synth", help="generate a synthetic panel with ground truth")
    _add_common(p)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except PhyloForecastError as exc:
        # custom argparse type= callables raise package errors directly
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except PhyloForecastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
