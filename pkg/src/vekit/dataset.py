"""SNLI-VE construction, auditing, statistics, and batch assembly.

The builder replaces each SNLI text premise with its source image id, drops
pairs whose gold label never reached annotator consensus ("-"), and assigns
every instance to the partition that owns its image. Partitions are keyed by
image, never by pair, so no image can leak across train/val/test; the audit
re-checks that from the serialized artifact.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, ParseError, SchemaError, ValidationError
from .text import PAD_TOKEN, tokenize

log = logging.getLogger("vekit.dataset")

LABELS = ("C", "N", "E")
LABEL_TO_INDEX = {"C": 0, "N": 1, "E": 2}
GOLD_TO_LABEL = {"contradiction": "C", "neutral": "N", "entailment": "E"}
NO_CONSENSUS = "-"
PARTITIONS = ("train", "val", "test")

_REQUIRED_FIELDS = ("gold_label", "sentence1", "sentence2", "captionID", "pairID")


@dataclass
class SnliRecord:
    gold_label: str
    premise_text: str
    hypothesis_text: str
    caption_id: str
    pair_id: str
    line_number: int = 0


@dataclass
class VEInstance:
    image_id: str
    tokens: list
    label: str
    pair_id: str = ""

    def to_json(self):
        return {"image_id": self.image_id, "tokens": self.tokens, "label": self.label}


@dataclass
class VEDataset:
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    test: list = field(default_factory=list)

    def partitions(self):
        return {"train": self.train, "val": self.val, "test": self.test}

    def image_ids(self, partition):
        return {inst.image_id for inst in self.partitions()[partition]}

    def __len__(self):
        return len(self.train) + len(self.val) + len(self.test)


def parse_snli(path, on_error="abort", diagnostics=None):
    """Stream SnliRecords from a JSON-lines file, keeping line numbers.

    on_error="continue" records a diagnostic for a malformed line and keeps
    going; "abort" raises. Missing fields are schema errors either way.
    """
    if on_error not in ("abort", "continue"):
        raise ConfigError(f"on_error must be abort or continue, got {on_error!r}")
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                message = f"line {line_no}: invalid JSON ({err.msg})"
                if on_error == "abort":
                    raise ParseError(message, line_number=line_no) from None
                log.warning("%s: %s", path, message)
                if diagnostics is not None:
                    diagnostics.append(message)
                continue
            missing = [f for f in _REQUIRED_FIELDS if f not in obj]
            if missing:
                raise SchemaError(
                    f"line {line_no}: missing field(s) {', '.join(missing)}",
                    line_number=line_no,
                )
            yield SnliRecord(
                gold_label=obj["gold_label"],
                premise_text=obj["sentence1"],
                hypothesis_text=obj["sentence2"],
                caption_id=obj["captionID"],
                pair_id=obj["pairID"],
                line_number=line_no,
            )


def derive_image_id(caption_id, diagnostics=None):
    """Image id is the caption id up to '#'; ids without an index pass through."""
    head, sep, _ = caption_id.partition("#")
    if not sep:
        message = f"caption id {caption_id!r} has no '#<index>' suffix; using it verbatim"
        log.warning(message)
        if diagnostics is not None:
            diagnostics.append(message)
    return head


def load_split(path):
    """Read {"train": [...], "val": [...], "test": [...]} and reject overlap."""
    with open(path, "r", encoding="utf-8") as fh:
        split = json.load(fh)
    missing = [p for p in PARTITIONS if p not in split]
    if missing:
        raise ConfigError(f"split file lacks partition(s): {', '.join(missing)}")
    seen = {}
    for part in PARTITIONS:
        for image_id in split[part]:
            if image_id in seen and seen[image_id] != part:
                raise ConfigError(
                    f"image {image_id!r} assigned to both {seen[image_id]} and {part}"
                )
            seen[image_id] = part
    return {p: list(split[p]) for p in PARTITIONS}


def random_split(image_ids, fractions=(0.8, 0.1, 0.1), seed=0):
    """Seeded disjoint image split for fixtures and synthetic runs."""
    import random as _random

    ids = sorted(set(image_ids))
    _random.Random(seed).shuffle(ids)
    n = len(ids)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return {
        "train": sorted(ids[:n_train]),
        "val": sorted(ids[n_train:n_train + n_val]),
        "test": sorted(ids[n_train + n_val:]),
    }


def build_snli_ve(records, split, on_missing_image="drop", diagnostics=None):
    """Map SNLI records with consensus labels onto image-keyed partitions.

    Records whose gold label is "-" are dropped; duplicate pair ids keep the
    first occurrence. Instances are sorted by (image_id, pair_id) within each
    partition so a rebuild from identical inputs is byte-identical.
    """
    if on_missing_image not in ("drop", "abort"):
        raise ConfigError(f"on_missing_image must be drop or abort, got {on_missing_image!r}")
    owner = {}
    for part in PARTITIONS:
        for image_id in split[part]:
            owner[image_id] = part

    buckets = {p: [] for p in PARTITIONS}
    seen_pairs = set()
    dropped_no_consensus = 0
    for rec in records:
        if rec.gold_label == NO_CONSENSUS:
            dropped_no_consensus += 1
            continue
        label = GOLD_TO_LABEL.get(rec.gold_label)
        if label is None:
            raise SchemaError(
                f"line {rec.line_number}: unknown gold label {rec.gold_label!r}",
                line_number=rec.line_number,
            )
        if rec.pair_id in seen_pairs:
            message = f"duplicate pair id {rec.pair_id!r} at line {rec.line_number}; keeping first"
            log.warning(message)
            if diagnostics is not None:
                diagnostics.append(message)
            continue
        seen_pairs.add(rec.pair_id)
        image_id = derive_image_id(rec.caption_id, diagnostics=diagnostics)
        part = owner.get(image_id)
        if part is None:
            message = f"image {image_id!r} missing from the split file"
            if on_missing_image == "abort":
                raise ValidationError(message)
            log.warning(message)
            if diagnostics is not None:
                diagnostics.append(message)
            continue
        buckets[part].append(
            VEInstance(
                image_id=image_id,
                tokens=tokenize(rec.hypothesis_text),
                label=label,
                pair_id=rec.pair_id,
            )
        )

    for part in PARTITIONS:
        buckets[part].sort(key=lambda inst: (inst.image_id, inst.pair_id))
    if dropped_no_consensus:
        log.info("dropped %d records with no gold-label consensus", dropped_no_consensus)
    dataset = VEDataset(train=buckets["train"], val=buckets["val"], test=buckets["test"])
    if not len(dataset):
        log.warning("built dataset is empty")
    return dataset


# ---------------------------------------------------------------------------
# Audit
# ---------------------------------------------------------------------------

@dataclass
class AuditReport:
    passed: bool
    intersections: dict          # "train/test" -> sorted shared image ids
    class_counts: dict           # partition -> {C, N, E}
    balance_spread: dict         # partition -> max/min class count - 1
    balance_ok: bool
    balance_tolerance: float

    def to_json(self):
        return {
            "passed": self.passed,
            "intersections": self.intersections,
            "class_counts": self.class_counts,
            "balance_spread": self.balance_spread,
            "balance_ok": self.balance_ok,
            "balance_tolerance": self.balance_tolerance,
        }


def validate_partitions(dataset, balance_tolerance=0.05):
    """Check image disjointness (hard) and class balance (reported, 5% default)."""
    ids = {p: dataset.image_ids(p) for p in PARTITIONS}
    intersections = {}
    for i, a in enumerate(PARTITIONS):
        for b in PARTITIONS[i + 1:]:
            shared = sorted(ids[a] & ids[b])
            intersections[f"{a}/{b}"] = shared
    disjoint = all(not shared for shared in intersections.values())

    class_counts = {}
    balance_spread = {}
    for part, instances in dataset.partitions().items():
        counts = Counter(inst.label for inst in instances)
        class_counts[part] = {label: counts.get(label, 0) for label in LABELS}
        values = [class_counts[part][label] for label in LABELS]
        if instances and min(values) > 0:
            balance_spread[part] = max(values) / min(values) - 1.0
        else:
            balance_spread[part] = float("inf") if instances else 0.0
    balance_ok = all(spread <= balance_tolerance for spread in balance_spread.values())

    return AuditReport(
        passed=disjoint,
        intersections=intersections,
        class_counts=class_counts,
        balance_spread=balance_spread,
        balance_ok=balance_ok,
        balance_tolerance=balance_tolerance,
    )


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

@dataclass
class CorpusStats:
    partition_sizes: dict
    image_counts: dict
    length_mean: float
    length_median: float
    length_mode: int
    length_max: int
    vocab_size: int
    histogram: dict  # token count -> number of hypotheses

    def to_json(self):
        return {
            "partition_sizes": self.partition_sizes,
            "image_counts": self.image_counts,
            "hypothesis_length": {
                "mean": self.length_mean,
                "median": self.length_median,
                "mode": self.length_mode,
                "max": self.length_max,
            },
            "vocab_size": self.vocab_size,
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
        }


def compute_stats(dataset):
    """Hypothesis-length and vocabulary statistics over all partitions combined."""
    lengths = []
    vocab = set()
    for instances in dataset.partitions().values():
        for inst in instances:
            lengths.append(len(inst.tokens))
            vocab.update(inst.tokens)
    histogram = Counter(lengths)

    if lengths:
        ordered = sorted(lengths)
        n = len(ordered)
        mean = sum(ordered) / n
        median = (
            float(ordered[n // 2])
            if n % 2
            else (ordered[n // 2 - 1] + ordered[n // 2]) / 2.0
        )
        # mode ties break toward the shorter length, deterministically
        mode = min(k for k, v in histogram.items() if v == max(histogram.values()))
        longest = ordered[-1]
    else:
        log.warning("stats over an empty dataset")
        mean = median = 0.0
        mode = longest = 0

    return CorpusStats(
        partition_sizes={p: len(v) for p, v in dataset.partitions().items()},
        image_counts={p: len(dataset.image_ids(p)) for p in PARTITIONS},
        length_mean=mean,
        length_median=median,
        length_mode=int(mode),
        length_max=int(longest),
        vocab_size=len(vocab),
        histogram=dict(histogram),
    )


def write_histogram_csv(stats, path):
    lines = ["length,count"]
    lines += [f"{k},{v}" for k, v in sorted(stats.histogram.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_dataset(dataset, out_dir):
    """One JSON-lines file per partition: {image_id, tokens, label}."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for part, instances in dataset.partitions().items():
        with open(out_dir / f"{part}.jsonl", "w", encoding="utf-8") as fh:
            for inst in instances:
                fh.write(json.dumps(inst.to_json(), sort_keys=True) + "\n")


def load_dataset(in_dir):
    in_dir = Path(in_dir)
    parts = {}
    for part in PARTITIONS:
        path = in_dir / f"{part}.jsonl"
        instances = []
        if path.exists():
            with open(path, "r", encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        obj = json.loads(line)
                    except json.JSONDecodeError as err:
                        raise ParseError(
                            f"{path} line {line_no}: {err.msg}", line_number=line_no
                        ) from None
                    if obj.get("label") not in LABELS:
                        raise SchemaError(
                            f"{path} line {line_no}: bad label {obj.get('label')!r}",
                            line_number=line_no,
                        )
                    instances.append(
                        VEInstance(
                            image_id=obj["image_id"],
                            tokens=list(obj["tokens"]),
                            label=obj["label"],
                            pair_id=obj.get("pair_id", ""),
                        )
                    )
        parts[part] = instances
    return VEDataset(train=parts["train"], val=parts["val"], test=parts["test"])


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------

@dataclass
class Batch:
    image_ids: list
    tokens: list      # rows padded to the batch-wise maximum length
    pad_mask: list    # True where the position is padding
    labels: list      # class indices, order (C, N, E)

    def __len__(self):
        return len(self.labels)


def make_batches(instances, batch_size, seed=None, vocab=None):
    """Pad each batch to its own maximum hypothesis length.

    With a seed the instance order is shuffled (training); without one the
    given order is kept (evaluation). Token rows are vocabulary ids when a
    vocab is supplied, else token strings padded with the PAD symbol.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    order = list(instances)
    if seed is not None:
        import random as _random

        _random.Random(seed).shuffle(order)

    batches = []
    for start in range(0, len(order), batch_size):
        chunk = order[start:start + batch_size]
        width = max((len(inst.tokens) for inst in chunk), default=0)
        width = max(width, 1)  # an all-empty batch still needs one column
        rows = []
        mask = []
        for inst in chunk:
            n = len(inst.tokens)
            pad = width - n
            if vocab is not None:
                rows.append(vocab.ids(inst.tokens) + [0] * pad)
            else:
                rows.append(list(inst.tokens) + [PAD_TOKEN] * pad)
            mask.append([False] * n + [True] * pad)
        batches.append(
            Batch(
                image_ids=[inst.image_id for inst in chunk],
                tokens=rows,
                pad_mask=mask,
                labels=[LABEL_TO_INDEX[inst.label] for inst in chunk],
            )
        )
    return batches
