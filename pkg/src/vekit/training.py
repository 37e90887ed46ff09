"""Training protocol: cross-entropy, Adam with decoupled decay, plateau
scheduling, best-checkpoint bookkeeping, and deterministic evaluation.

Checkpoints are written whenever overall validation accuracy improves; the
final model is then chosen among saved checkpoints by the highest *minimum*
per-class accuracy (ties: higher overall, then later epoch) so a model biased
toward one class never wins selection.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import LABELS, make_batches
from .errors import ConfigError, ContractError, MissingInputError
from .models import forward_instance, save_checkpoint
from .numcore import backward, concat_rows, cross_entropy_mean, zero_grad
from .numcore.kernels import adam_update

log = logging.getLogger("vekit.training")


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 64
    eval_batch_size: int = 32
    max_epochs: int = 100
    patience: int = 3
    lr_factor: float = 0.5
    lr_floor: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    schedule: str = "plateau"  # "constant" pins lr for fixed-rate runs
    stop_at_train_acc: float | None = None

    def __post_init__(self):
        for name in ("lr", "weight_decay", "batch_size", "eval_batch_size",
                     "max_epochs", "patience", "lr_floor"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.lr_factor < 1.0:
            raise ConfigError(f"lr_factor must be in (0, 1), got {self.lr_factor}")
        if self.schedule not in ("plateau", "constant"):
            raise ConfigError(f"schedule must be plateau or constant, got {self.schedule!r}")


def cross_entropy(logits, labels):
    """Mean -log softmax(logits)[label] over the batch (differentiable)."""
    return cross_entropy_mean(logits, labels)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def init(cls, params):
        return cls(
            m={name: np.zeros_like(t.data) for name, t in params.items()},
            v={name: np.zeros_like(t.data) for name, t in params.items()},
        )


def adam_step(params, grads, state, cfg, lr=None):
    """One bias-corrected Adam update over named tensors.

    Weight decay is decoupled: p <- p - lr*wd*p is applied before the Adam
    delta, so decay never leaks into the moment estimates. ``grads`` may be
    None to read each tensor's .grad field.
    """
    lr = cfg.lr if lr is None else lr
    state.step += 1
    for name, tensor in params.items():
        g = tensor.grad if grads is None else grads[name]
        if g is None:
            raise ContractError(f"no gradient for parameter {name!r}")
        g = np.asarray(g)
        if g.shape != tensor.data.shape:
            raise ContractError(
                f"gradient shape {g.shape} != param shape {tensor.data.shape} for {name!r}"
            )
        if cfg.weight_decay:
            tensor.data *= 1.0 - lr * cfg.weight_decay
        adam_update(
            tensor.data.reshape(-1),
            np.ascontiguousarray(g, dtype=tensor.data.dtype).reshape(-1),
            state.m[name].reshape(-1),
            state.v[name].reshape(-1),
            state.step,
            lr,
            cfg.beta1,
            cfg.beta2,
            cfg.eps,
        )
    return params


# ---------------------------------------------------------------------------
# Learning-rate schedule
# ---------------------------------------------------------------------------

@dataclass
class PlateauState:
    lr: float
    patience: int = 3
    factor: float = 0.5
    floor: float = 1e-6
    best: float = -math.inf
    bad_epochs: int = 0
    seen: int = 0


def plateau_schedule(history, state):
    """Reduce lr when the best validation accuracy stalls for `patience` epochs.

    ``history`` is the full list of per-epoch validation accuracies; entries
    already consumed are skipped, so the call is idempotent per epoch.
    """
    for acc in history[state.seen:]:
        state.seen += 1
        if acc > state.best:
            state.best = acc
            state.bad_epochs = 0
        else:
            state.bad_epochs += 1
            if state.bad_epochs >= state.patience:
                state.lr = max(state.lr * state.factor, state.floor)
                state.bad_epochs = 0
    return state.lr


# ---------------------------------------------------------------------------
# Metrics and evaluation
# ---------------------------------------------------------------------------

@dataclass
class Metrics:
    overall: float
    per_class: dict
    confusion: list  # confusion[true][predicted], class order (C, N, E)

    @classmethod
    def from_confusion(cls, confusion):
        confusion = np.asarray(confusion, dtype=np.int64)
        total = int(confusion.sum())
        overall = float(np.trace(confusion) / total) if total else 0.0
        per_class = {}
        for i, label in enumerate(LABELS):
            row = int(confusion[i].sum())
            per_class[label] = float(confusion[i, i] / row) if row else 0.0
        return cls(overall=overall, per_class=per_class, confusion=confusion.tolist())

    @property
    def min_per_class(self):
        return min(self.per_class.values())

    def to_json(self):
        return {"overall": self.overall, "per_class": self.per_class, "confusion": self.confusion}


def evaluate(params, instances, ctx, batch_size=32, vocab=None):
    """Argmax predictions over a partition; deterministic, order-invariant."""
    confusion = np.zeros((3, 3), dtype=np.int64)
    skipped = 0
    for batch in make_batches(instances, batch_size, seed=None, vocab=vocab):
        for row, image_id, label in zip(batch.tokens, batch.image_ids, batch.labels):
            try:
                logits, _ = forward_instance(params, ctx, row, image_id=image_id)
            except MissingInputError as err:
                skipped += 1
                log.warning("skipping instance: %s", err)
                continue
            predicted = int(np.argmax(logits.data[0]))
            confusion[label, predicted] += 1
    if skipped:
        log.warning("evaluation skipped %d instances with missing inputs", skipped)
    return Metrics.from_confusion(confusion)


# ---------------------------------------------------------------------------
# Checkpoint policy
# ---------------------------------------------------------------------------

@dataclass
class CheckpointEntry:
    epoch: int
    metrics: Metrics
    path: str


@dataclass
class CheckpointHistory:
    entries: list = field(default_factory=list)

    def add(self, entry):
        if self.entries and entry.epoch <= self.entries[-1].epoch:
            raise ContractError("checkpoint epochs must be strictly increasing")
        self.entries.append(entry)


def select_checkpoint(history):
    """Pick max min-per-class accuracy; break ties by overall, then later epoch."""
    entries = history.entries if isinstance(history, CheckpointHistory) else list(history)
    if not entries:
        raise ContractError("select_checkpoint over an empty history")
    return max(entries, key=lambda e: (e.metrics.min_per_class, e.metrics.overall, e.epoch))


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    history: CheckpointHistory
    best: CheckpointEntry | None
    epochs_run: int
    final_train_accuracy: float
    log_path: str | None


def _batch_loss(params, ctx, batch):
    rows = []
    labels = []
    skipped = 0
    for tokens, image_id, label in zip(batch.tokens, batch.image_ids, batch.labels):
        try:
            logits, _ = forward_instance(params, ctx, tokens, image_id=image_id)
        except MissingInputError as err:
            skipped += 1
            log.warning("skipping instance: %s", err)
            continue
        rows.append(logits)
        labels.append(label)
    if not rows:
        return None, skipped
    return cross_entropy(concat_rows(rows), labels), skipped


def train(params, train_instances, val_instances, ctx, config, out_dir=None, vocab=None):
    """Run the full protocol; returns history plus the selected checkpoint.

    Deterministic for a fixed (config, seed): batch order derives from
    config.seed + epoch, parameter init is the caller's, and the optimizer
    applies updates in fixed name order.
    """
    named = params.named()
    tensors = list(named.values())
    state = AdamState.init(named)
    sched = PlateauState(
        lr=config.lr, patience=config.patience, factor=config.lr_factor, floor=config.lr_floor
    )
    history = CheckpointHistory()
    val_accuracies = []
    best_overall = -math.inf
    out_dir = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_dir / "training_log.jsonl", "w", encoding="utf-8")

    lr = config.lr
    epochs_run = 0
    train_acc = 0.0
    try:
        for epoch in range(1, config.max_epochs + 1):
            epochs_run = epoch
            losses = []
            for batch in make_batches(
                train_instances, config.batch_size, seed=config.seed + epoch, vocab=vocab
            ):
                zero_grad(tensors)
                loss, _ = _batch_loss(params, ctx, batch)
                if loss is None:
                    continue
                backward(loss)
                adam_step(named, None, state, config, lr=lr)
                losses.append(loss.item())
            train_loss = float(np.mean(losses)) if losses else 0.0

            val_metrics = evaluate(
                params, val_instances, ctx, batch_size=config.eval_batch_size, vocab=vocab
            )
            val_accuracies.append(val_metrics.overall)
            lr_next = plateau_schedule(val_accuracies, sched) if config.schedule == "plateau" else lr

            checkpoint_path = ""
            if val_metrics.overall > best_overall:
                best_overall = val_metrics.overall
                if out_dir is not None:
                    checkpoint_path = str(out_dir / f"checkpoint_epoch{epoch:03d}.vec")
                    save_checkpoint(checkpoint_path, params)
                history.add(CheckpointEntry(epoch=epoch, metrics=val_metrics, path=checkpoint_path))

            if log_fh is not None:
                log_fh.write(json.dumps({
                    "epoch": epoch,
                    "lr": lr,
                    "train_loss": train_loss,
                    "val_overall": val_metrics.overall,
                    "val_C": val_metrics.per_class["C"],
                    "val_N": val_metrics.per_class["N"],
                    "val_E": val_metrics.per_class["E"],
                    "checkpoint_path": checkpoint_path,
                }, sort_keys=True) + "\n")
                log_fh.flush()
            lr = lr_next

            if config.stop_at_train_acc is not None:
                train_acc = evaluate(
                    params, train_instances, ctx, batch_size=config.eval_batch_size, vocab=vocab
                ).overall
                if train_acc >= config.stop_at_train_acc:
                    break
    finally:
        if log_fh is not None:
            log_fh.close()

    if config.stop_at_train_acc is None:
        train_acc = evaluate(
            params, train_instances, ctx, batch_size=config.eval_batch_size, vocab=vocab
        ).overall
    best = select_checkpoint(history) if history.entries else None
    return TrainResult(
        history=history,
        best=best,
        epochs_run=epochs_run,
        final_train_accuracy=train_acc,
        log_path=str(out_dir / "training_log.jsonl") if out_dir is not None else None,
    )
