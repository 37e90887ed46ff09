"""ve-kit command line: dataset construction, audit, stats, training,
evaluation, and attention-heatmap export.

Exit codes: 0 success, 1 validation/domain failure, 2 usage error. Diagnostics
go to stderr; machine-readable results go to stdout or files. Flag precedence
is flags > VEKIT_SEED (seed only) > config file > defaults, and every run
echoes its fully resolved configuration to stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import models as md
from . import training as tr
from .errors import VEKitError
from .features import read_feature_file, FeatureStore
from .numcore import set_dtype
from .text import EmbeddingTable, build_vocab, load_embeddings, tokenize


class UsageError(VEKitError):
    """Bad flag/config usage; maps to exit code 2."""


def _echo_config(name, resolved):
    print(f"[ve-kit {name}] config: {json.dumps(resolved, sort_keys=True)}", file=sys.stderr)


def _emit(payload, out=None):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def load_config_file(path):
    """Parse `key = value` lines; blank lines and #-comments are ignored."""
    values = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{line_no}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


_TRAIN_KEYS = {
    "lr": float, "weight_decay": float, "batch_size": int, "eval_batch_size": int,
    "max_epochs": int, "patience": int, "lr_factor": float, "seed": int,
    "schedule": str, "precision": str, "embed_dim": int, "hidden": int,
    "feat_dim": int, "rn_hidden": int,
}


def _resolve(args, keys):
    """Overlay: explicit flags > VEKIT_SEED > config file > dataclass defaults."""
    overlay = {}
    if getattr(args, "config", None):
        file_values = load_config_file(args.config)
        unknown = set(file_values) - set(keys)
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        for key, raw in file_values.items():
            try:
                overlay[key] = keys[key](raw)
            except ValueError:
                raise UsageError(f"config key {key} = {raw!r} is not a {keys[key].__name__}")
    env_seed = os.environ.get("VEKIT_SEED")
    if env_seed is not None and "seed" in keys:
        try:
            overlay["seed"] = int(env_seed)
        except ValueError:
            raise UsageError(f"VEKIT_SEED={env_seed!r} is not an integer")
    for key in keys:
        flag = getattr(args, key, None)
        if flag is not None:
            overlay[key] = flag
    return overlay


def _apply_precision(name):
    set_dtype(np.float32 if name == "single" else np.float64)


# ---------------------------------------------------------------------------
# Shared model-context assembly
# ---------------------------------------------------------------------------

def _load_corpus_vocab(dataset_dir):
    corpus = ds.load_dataset(dataset_dir)
    vocab = build_vocab(
        inst.tokens for part in corpus.partitions().values() for inst in part
    )
    return corpus, vocab


def _build_context(args, vocab, embed_dim, seed):
    if getattr(args, "embeddings", None):
        table = load_embeddings(args.embeddings, vocab, dim=embed_dim, seed=seed)
        print(f"[ve-kit] embedding coverage: {table.coverage:.3f}", file=sys.stderr)
    else:
        table = EmbeddingTable.random(vocab, embed_dim, seed=seed)
    store = FeatureStore(args.features) if getattr(args, "features", None) else None
    captions = {}
    if getattr(args, "captions", None):
        captions = json.loads(Path(args.captions).read_text(encoding="utf-8"))
    return md.ModelContext(embeddings=table, feature_store=store, captions=captions)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_build_dataset(args):
    resolved = {"snli": args.snli, "split": args.split, "out": args.out,
                "on_error": args.on_error, "on_missing_image": args.on_missing_image}
    _echo_config("build-dataset", resolved)
    diagnostics = []
    records = ds.parse_snli(args.snli, on_error=args.on_error, diagnostics=diagnostics)
    split = ds.load_split(args.split)
    built = ds.build_snli_ve(
        records, split, on_missing_image=args.on_missing_image, diagnostics=diagnostics
    )
    ds.save_dataset(built, args.out)
    for message in diagnostics:
        print(f"[ve-kit build-dataset] {message}", file=sys.stderr)
    _emit({
        "out": str(args.out),
        "instances": {p: len(v) for p, v in built.partitions().items()},
        "images": {p: len(built.image_ids(p)) for p in ds.PARTITIONS},
        "diagnostics": len(diagnostics),
    })
    return 0


def cmd_audit(args):
    _echo_config("audit", {"dataset": args.dataset, "balance_tolerance": args.balance_tolerance})
    corpus = ds.load_dataset(args.dataset)
    report = ds.validate_partitions(corpus, balance_tolerance=args.balance_tolerance)
    _emit(report.to_json(), out=args.out)
    if not report.passed:
        offenders = {pair: ids for pair, ids in report.intersections.items() if ids}
        print(f"[ve-kit audit] image overlap: {offenders}", file=sys.stderr)
        return 1
    return 0


def cmd_stats(args):
    _echo_config("stats", {"dataset": args.dataset, "format": args.format})
    corpus = ds.load_dataset(args.dataset)
    stats = ds.compute_stats(corpus)
    _emit(stats.to_json(), out=args.out)
    if args.histogram_csv:
        ds.write_histogram_csv(stats, args.histogram_csv)
    return 0


def cmd_train(args):
    overlay = _resolve(args, _TRAIN_KEYS)
    precision = overlay.pop("precision", "double")
    dims_overlay = {k: overlay.pop(k) for k in ("embed_dim", "hidden", "feat_dim", "rn_hidden")
                    if k in overlay}
    config = tr.TrainConfig(**overlay)
    _apply_precision(precision)
    dims = md.ModelDims(
        embed=dims_overlay.get("embed_dim", 300),
        hidden=dims_overlay.get("hidden", 300),
        feat=dims_overlay.get("feat_dim", 2048),
        rn_hidden=dims_overlay.get("rn_hidden", 256),
    )
    resolved = {"arch": args.arch, "dataset": args.dataset, "out": args.out,
                "precision": precision, "dims": vars(dims), **vars(config).copy()}
    _echo_config("train", resolved)

    corpus, vocab = _load_corpus_vocab(args.dataset)
    ctx = _build_context(args, vocab, dims.embed, config.seed)
    params = md.ModelParams.init(args.arch, dims=dims, seed=config.seed)
    result = tr.train(
        params, corpus.train, corpus.val, ctx, config, out_dir=args.out, vocab=vocab
    )
    best = result.best
    _emit({
        "arch": args.arch,
        "epochs_run": result.epochs_run,
        "train_accuracy": result.final_train_accuracy,
        "vocab_size": len(vocab),
        "best_checkpoint": best.path if best else None,
        "best_epoch": best.epoch if best else None,
        "best_val": best.metrics.to_json() if best else None,
        "training_log": result.log_path,
    })
    return 0


def cmd_eval(args):
    _echo_config("eval", {
        "dataset": args.dataset, "partition": args.partition,
        "checkpoint": args.checkpoint, "batch_size": args.batch_size,
        "seed": args.seed, "precision": args.precision,
    })
    _apply_precision(args.precision)
    params = md.load_checkpoint(args.checkpoint)
    corpus, vocab = _load_corpus_vocab(args.dataset)
    ctx = _build_context(args, vocab, params.dims.embed, args.seed)
    instances = corpus.partitions()[args.partition]
    metrics = tr.evaluate(params, instances, ctx, batch_size=args.batch_size, vocab=vocab)
    _emit({"partition": args.partition, "instances": len(instances), **metrics.to_json()},
          out=args.out)
    return 0


# ---------------------------------------------------------------------------
# Visualization
# ---------------------------------------------------------------------------

def write_pgm(path, values, shape):
    """Grayscale P2 heatmap, weights min-max normalized onto [0, 255].

    A flat (all-equal) map has no range to stretch: a single cell renders
    saturated, several equal cells render mid-gray.
    """
    values = np.asarray(values, dtype=np.float64).reshape(shape)
    span = values.max() - values.min()
    if span <= 1e-12:
        fill = 255 if values.size == 1 else 128
        pixels = np.full(values.shape, fill, dtype=np.int64)
    else:
        pixels = np.rint((values - values.min()) / span * 255).astype(np.int64)
    lines = [f"P2", f"{values.shape[1]} {values.shape[0]}", "255"]
    lines += [" ".join(str(v) for v in row) for row in pixels]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_visualize(args):
    _echo_config("visualize", {
        "checkpoint": args.checkpoint, "feature_file": args.feature_file,
        "hypothesis": args.hypothesis, "out": args.out,
        "dataset": args.dataset, "seed": args.seed,
    })
    _apply_precision(args.precision)
    params = md.load_checkpoint(args.checkpoint)
    if params.arch not in ("eve_image", "eve_roi"):
        raise VEKitError(
            f"visualize needs an eve_image or eve_roi checkpoint, got {params.arch!r}"
        )
    features = read_feature_file(args.feature_file)
    _, vocab = _load_corpus_vocab(args.dataset)
    ctx = _build_context(args, vocab, params.dims.embed, args.seed)
    tokens = tokenize(args.hypothesis)
    logits, mask = md.forward_eve(features, tokens, params, ctx)
    weights = mask.data[0].tolist()
    predicted = ds.LABELS[int(np.argmax(logits.data[0]))]

    payload = {
        "image_id": features.image_id,
        "hypothesis": args.hypothesis,
        "tokens": tokens,
        "predicted_label": predicted,
        "weights": weights,
    }
    if features.kind == "grid":
        k, d = features.grid_shape
        payload["grid"] = [d, d]
    else:
        payload["boxes"] = np.asarray(features.boxes).tolist()

    out_prefix = Path(args.out)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    json_path = out_prefix.with_suffix(".json")
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written = [str(json_path)]
    if features.kind == "grid":
        _, d = features.grid_shape
        pgm_path = out_prefix.with_suffix(".pgm")
        write_pgm(pgm_path, weights, (d, d))
        written.append(str(pgm_path))
    print("\n".join(written))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="ve-kit",
        description="SNLI-VE dataset toolkit and visual entailment models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-dataset", help="construct partitions from SNLI + image split")
    p.add_argument("--snli", required=True, help="SNLI JSON-lines file")
    p.add_argument("--split", required=True, help="image split JSON file")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--on-error", choices=("abort", "continue"), default="abort")
    p.add_argument("--on-missing-image", choices=("drop", "abort"), default="drop")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("audit", help="check partition disjointness and balance")
    p.add_argument("--dataset", required=True)
    p.add_argument("--balance-tolerance", type=float, default=0.05)
    p.add_argument("--out", default=None, help="write the report here instead of stdout")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--format", choices=("json",), default="json")
    p.add_argument("--out", default=None)
    p.add_argument("--histogram-csv", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train one architecture")
    p.add_argument("--dataset", required=True)
    p.add_argument("--arch", required=True, choices=md.ARCHITECTURES)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="key = value overlay file")
    p.add_argument("--features", default=None, help="VEF1 feature directory")
    p.add_argument("--captions", default=None, help="image_id -> caption JSON (te)")
    p.add_argument("--embeddings", default=None, help="pretrained embedding text file")
    for key, cast in _TRAIN_KEYS.items():
        if key == "precision":
            p.add_argument("--precision", choices=("single", "double"), default=None)
        elif key == "schedule":
            p.add_argument("--schedule", choices=("plateau", "constant"), default=None)
        else:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=cast, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a partition")
    p.add_argument("--dataset", required=True)
    p.add_argument("--partition", choices=ds.PARTITIONS, default="test")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", default=None)
    p.add_argument("--captions", default=None)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision", choices=("single", "double"), default="double")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("visualize", help="export a text-image attention heatmap")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--feature-file", dest="feature_file", required=True)
    p.add_argument("--hypothesis", required=True)
    p.add_argument("--out", required=True, help="output prefix; writes .json (+ .pgm for grid)")
    p.add_argument("--dataset", required=True, help="dataset dir the vocab derives from")
    p.add_argument("--embeddings", default=None)
    p.add_argument("--features", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision", choices=("single", "double"), default="double")
    p.set_defaults(func=cmd_visualize)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        return args.func(args)
    except UsageError as err:
        print(f"ve-kit: usage error: {err}", file=sys.stderr)
        return 2
    except (VEKitError, FileNotFoundError) as err:
        print(f"ve-kit: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
