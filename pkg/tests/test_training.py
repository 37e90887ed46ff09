"""Training mechanics: loss, optimizer, scheduler, selection, evaluation, loop."""

import json
import math

import numpy as np
import pytest

from conftest import TOY_DIMS, toy_context, toy_vocab
from vekit import numcore as nc
from vekit.dataset import VEInstance
from vekit.errors import ConfigError, ContractError
from vekit.models import ModelParams
from vekit.training import (
    AdamState,
    CheckpointEntry,
    CheckpointHistory,
    Metrics,
    PlateauState,
    TrainConfig,
    adam_step,
    cross_entropy,
    evaluate,
    plateau_schedule,
    select_checkpoint,
    train,
)


class TestCrossEntropy:
    def test_uniform_logits(self):
        loss = cross_entropy(nc.tensor([[0.0, 0.0, 0.0]]), [1])
        assert abs(loss.item() - math.log(3)) < 1e-12

    def test_hand_softmax_oracle(self):
        # -ln(e^2 / (e^2 + 2))
        expected = -math.log(math.exp(2) / (math.exp(2) + 2))
        loss = cross_entropy(nc.tensor([[2.0, 0.0, 0.0]]), [0])
        assert abs(loss.item() - expected) < 1e-12
        assert abs(loss.item() - 0.2395) < 1e-4

    def test_confident_correct_logits_drive_loss_to_zero(self):
        loss = cross_entropy(nc.tensor([[1000.0, 0.0, 0.0]]), [0])
        assert loss.item() < 1e-12

    def test_label_out_of_range(self):
        with pytest.raises(ContractError):
            cross_entropy(nc.tensor([[0.0, 0.0, 0.0]]), [3])

    def test_batch_mean(self):
        logits = nc.tensor([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        loss = cross_entropy(logits, [0, 0])
        expected = (math.log(3) + -math.log(math.exp(2) / (math.exp(2) + 2))) / 2
        assert abs(loss.item() - expected) < 1e-12


def _one_param(value):
    t = nc.tensor(np.full((2, 2), value), requires_grad=True)
    return {"w": t}


class TestAdamStep:
    def test_zero_grad_zero_state_is_identity(self):
        params = _one_param(1.5)
        state = AdamState.init(params)
        cfg = TrainConfig(weight_decay=1e-12)  # config requires positive wd; negligible
        cfg.weight_decay = 0.0
        grads = {"w": np.zeros((2, 2))}
        adam_step(params, grads, state, cfg)
        np.testing.assert_array_equal(params["w"].data, np.full((2, 2), 1.5))

    def test_first_step_bias_correction(self):
        # m_hat = v_hat = 1 after one unit-gradient step -> delta ~= -lr
        params = _one_param(0.0)
        state = AdamState.init(params)
        cfg = TrainConfig()
        cfg.weight_decay = 0.0
        adam_step(params, {"w": np.ones((2, 2))}, state, cfg)
        np.testing.assert_allclose(params["w"].data, np.full((2, 2), -1e-4), atol=1e-8)

    def test_decoupled_decay_only(self):
        params = _one_param(1.0)
        state = AdamState.init(params)
        cfg = TrainConfig()  # lr = wd = 1e-4
        adam_step(params, {"w": np.zeros((2, 2))}, state, cfg)
        np.testing.assert_allclose(params["w"].data, np.full((2, 2), 1.0 - 1e-8), atol=1e-15)

    def test_shape_mismatch(self):
        params = _one_param(0.0)
        state = AdamState.init(params)
        with pytest.raises(ContractError):
            adam_step(params, {"w": np.zeros((3, 3))}, state, TrainConfig())

    def test_reads_grad_fields_when_grads_none(self):
        params = _one_param(0.0)
        params["w"].grad = np.ones((2, 2))
        state = AdamState.init(params)
        cfg = TrainConfig()
        cfg.weight_decay = 0.0
        adam_step(params, None, state, cfg)
        assert params["w"].data[0, 0] != 0.0


class TestPlateauSchedule:
    def test_improving_accuracy_keeps_lr(self):
        state = PlateauState(lr=1e-4, patience=3)
        history = []
        for acc in (0.5, 0.6, 0.7, 0.8):
            history.append(acc)
            lr = plateau_schedule(history, state)
        assert lr == 1e-4

    def test_flat_for_patience_epochs_halves(self):
        state = PlateauState(lr=1e-4, patience=3, factor=0.5)
        history = [0.5]
        plateau_schedule(history, state)
        for _ in range(3):
            history.append(0.5)
        lr = plateau_schedule(history, state)
        assert lr == pytest.approx(5e-5)

    def test_floor(self):
        state = PlateauState(lr=1e-4, patience=1, factor=0.5, floor=1e-6)
        history = [0.9]
        plateau_schedule(history, state)
        for _ in range(40):
            history.append(0.1)
        lr = plateau_schedule(history, state)
        assert lr == pytest.approx(1e-6)

    def test_counter_resets_after_reduction(self):
        state = PlateauState(lr=1e-4, patience=2, factor=0.5)
        history = [0.5, 0.5, 0.5]  # one reduction (epochs 2 and 3 are bad)
        lr = plateau_schedule(history, state)
        assert lr == pytest.approx(5e-5)
        history.append(0.5)  # only one bad epoch since the reset
        lr = plateau_schedule(history, state)
        assert lr == pytest.approx(5e-5)


def _entry(epoch, c, n, e):
    conf = np.diag([int(100 * c), int(100 * n), int(100 * e)])
    conf[0, 1] = 100 - int(100 * c)
    conf[1, 2] = 100 - int(100 * n)
    conf[2, 0] = 100 - int(100 * e)
    return CheckpointEntry(epoch=epoch, metrics=Metrics.from_confusion(conf), path=f"ck{epoch}")


class TestSelectCheckpoint:
    def test_max_min_per_class(self):
        history = CheckpointHistory()
        history.add(_entry(1, 0.60, 0.90, 0.90))
        history.add(_entry(2, 0.66, 0.80, 0.70))
        history.add(_entry(3, 0.64, 0.85, 0.88))
        assert select_checkpoint(history).epoch == 2

    def test_single_entry(self):
        history = CheckpointHistory()
        history.add(_entry(5, 0.5, 0.5, 0.5))
        assert select_checkpoint(history).epoch == 5

    def test_tie_broken_by_overall(self):
        a = _entry(1, 0.70, 0.70, 0.70)
        b = _entry(2, 0.70, 0.70, 0.73)  # same min, higher overall
        history = CheckpointHistory()
        history.add(a)
        history.add(b)
        assert select_checkpoint(history).epoch == 2

    def test_order_invariant(self):
        entries = [_entry(1, 0.6, 0.7, 0.8), _entry(2, 0.75, 0.7, 0.7), _entry(3, 0.9, 0.5, 0.9)]
        import itertools

        picks = set()
        for perm in itertools.permutations(entries):
            picks.add(select_checkpoint(list(perm)).epoch)
        assert picks == {2}

    def test_empty_history(self):
        with pytest.raises(ContractError):
            select_checkpoint(CheckpointHistory())

    def test_epochs_strictly_increasing(self):
        history = CheckpointHistory()
        history.add(_entry(3, 0.5, 0.5, 0.5))
        with pytest.raises(ContractError):
            history.add(_entry(3, 0.6, 0.6, 0.6))


class TestMetrics:
    def test_hand_confusion_fixture(self):
        conf = [[8, 1, 1], [2, 6, 2], [0, 0, 10]]
        m = Metrics.from_confusion(conf)
        assert m.overall == pytest.approx(24 / 30)
        assert m.per_class == {
            "C": pytest.approx(0.8),
            "N": pytest.approx(0.6),
            "E": pytest.approx(1.0),
        }
        assert m.min_per_class == pytest.approx(0.6)

    def test_perfect_predictor(self, ctx, monkeypatch):
        """Instances whose first token names the true class, read by a fake forward."""
        import vekit.training as training_mod
        from vekit.dataset import LABEL_TO_INDEX

        def oracle_forward(params, ctx, tokens, image_id=None):
            label = next(t for t in tokens if t in LABEL_TO_INDEX)
            logits = np.full((1, 3), -5.0)
            logits[0, LABEL_TO_INDEX[label]] = 5.0
            return nc.tensor(logits), None

        monkeypatch.setattr(training_mod, "forward_instance", oracle_forward)
        instances = [
            VEInstance("toy_grid.jpg", [label, "sun"], label) for label in ("C", "N", "E") * 2
        ]
        metrics = evaluate(object(), instances, ctx)
        assert metrics.overall == 1.0
        assert set(metrics.per_class.values()) == {1.0}

    def test_constant_predictor_on_balanced_fixture(self, ctx):
        metrics = evaluate(_constant_model("E"), _toy_instances(["C", "N", "E"] * 4), ctx)
        assert metrics.overall == pytest.approx(1 / 3)
        assert metrics.per_class == {"C": 0.0, "N": 0.0, "E": 1.0}

    def test_order_and_batch_size_invariant(self, ctx):
        instances = _toy_instances(["C", "E", "N", "E", "C", "N", "E"])
        model = _constant_model("N")
        a = evaluate(model, instances, ctx, batch_size=2)
        b = evaluate(model, list(reversed(instances)), ctx, batch_size=5)
        assert a.overall == b.overall and a.per_class == b.per_class


def _toy_instances(labels, tokens=("sun", "moon")):
    return [
        VEInstance(image_id="toy_grid.jpg", tokens=list(tokens), label=label)
        for label in labels
    ]


def _constant_model(label):
    """Real hypothesis_only params rigged so the class bias dominates the logits."""
    params = ModelParams.init("hypothesis_only", dims=TOY_DIMS, seed=0)
    for tensor in params.named().values():
        tensor.data[...] = 0.0
    params.cls2.b.data[0, {"C": 0, "N": 1, "E": 2}[label]] = 1.0
    return params


class TestTrainLoop:
    def _setup(self, n=8, seed=2):
        rng = np.random.default_rng(seed)
        vocab = toy_vocab()
        words = vocab.index_to_token[2:]
        instances = [
            VEInstance(
                image_id="toy_grid.jpg",
                tokens=[words[int(i)] for i in rng.integers(0, len(words), size=3)],
                label=("C", "N", "E")[int(rng.integers(0, 3))],
            )
            for _ in range(n)
        ]
        return instances

    def test_loss_decreases_over_first_steps(self, ctx):
        """Overfitting a fixed 8-example batch at lr 1e-3: loss falls monotonically."""
        from vekit.models import forward_instance as real_forward
        from vekit.numcore import backward, concat_rows, zero_grad
        from vekit.training import _batch_loss
        from vekit.dataset import make_batches

        instances = self._setup()
        params = ModelParams.init("hypothesis_only", dims=TOY_DIMS, seed=5)
        named = params.named()
        state = AdamState.init(named)
        cfg = TrainConfig(lr=1e-3)
        cfg.weight_decay = 0.0
        batch = make_batches(instances, 8)[0]
        losses = []
        for _ in range(50):
            zero_grad(list(named.values()))
            loss, _ = _batch_loss(params, ctx, batch)
            backward(loss)
            adam_step(named, None, state, cfg, lr=1e-3)
            losses.append(loss.item())
        assert all(b < a for a, b in zip(losses, losses[1:])), losses[:10]

    def test_full_run_reproducible(self, ctx, tmp_path):
        instances = self._setup(n=6)
        results = []
        for run in ("one", "two"):
            params = ModelParams.init("hypothesis_only", dims=TOY_DIMS, seed=9)
            cfg = TrainConfig(lr=1e-3, batch_size=4, max_epochs=3, seed=42)
            result = train(params, instances, instances, ctx, cfg, out_dir=tmp_path / run)
            results.append(result)
        logs = []
        for run in ("one", "two"):
            rows = [
                json.loads(line)
                for line in (tmp_path / run / "training_log.jsonl").read_text().splitlines()
            ]
            for row in rows:
                row.pop("checkpoint_path")  # embeds the per-run directory
            logs.append(rows)
        assert logs[0] == logs[1]
        assert results[0].final_train_accuracy == results[1].final_train_accuracy

    def test_training_log_schema(self, ctx, tmp_path):
        instances = self._setup(n=4)
        params = ModelParams.init("hypothesis_only", dims=TOY_DIMS, seed=9)
        cfg = TrainConfig(lr=1e-3, batch_size=4, max_epochs=2, seed=1)
        train(params, instances, instances, ctx, cfg, out_dir=tmp_path)
        lines = (tmp_path / "training_log.jsonl").read_text().strip().splitlines()
        assert len(lines) == 2
        row = json.loads(lines[0])
        assert set(row) == {
            "epoch", "lr", "train_loss", "val_overall", "val_C", "val_N", "val_E",
            "checkpoint_path",
        }

    def test_checkpoint_saved_on_improvement_and_selected(self, ctx, tmp_path):
        instances = self._setup(n=6)
        params = ModelParams.init("hypothesis_only", dims=TOY_DIMS, seed=9)
        cfg = TrainConfig(lr=1e-3, batch_size=6, max_epochs=4, seed=3)
        result = train(params, instances, instances, ctx, cfg, out_dir=tmp_path)
        assert result.history.entries, "at least the first epoch improves over -inf"
        assert result.best is not None
        assert (tmp_path / result.history.entries[0].path.split("/")[-1]).exists()

    def test_pad_embedding_row_stays_zero_after_training(self, ctx):
        table = ctx.embeddings
        np.testing.assert_array_equal(table.matrix[0], np.zeros(TOY_DIMS.embed))
        instances = self._setup(n=6)
        params = ModelParams.init("hypothesis_only", dims=TOY_DIMS, seed=9)
        cfg = TrainConfig(lr=1e-2, batch_size=6, max_epochs=5, seed=3)
        train(params, instances, instances, ctx, cfg)
        np.testing.assert_array_equal(table.matrix[0], np.zeros(TOY_DIMS.embed))

    def test_label_permutation_smoke(self, ctx, tmp_path):
        """Overfit a tiny separable set, permute labels, retrain: predictions permute."""
        words = ("sun", "moon", "star", "sky", "sea", "sand")
        instances = [
            VEInstance("toy_grid.jpg", [w], ("C", "N", "E")[i % 3])
            for i, w in enumerate(words)
        ]
        perm = {"C": "N", "N": "E", "E": "C"}
        permuted = [
            VEInstance(image_id=i.image_id, tokens=i.tokens, label=perm[i.label])
            for i in instances
        ]
        from vekit.dataset import LABEL_TO_INDEX

        predictions = {}
        for name, data in (("base", instances), ("perm", permuted)):
            params = ModelParams.init("hypothesis_only", dims=TOY_DIMS, seed=9)
            cfg = TrainConfig(
                lr=1e-2, batch_size=6, max_epochs=250, seed=3,
                schedule="constant", stop_at_train_acc=1.0,
            )
            cfg.weight_decay = 0.0
            result = train(params, data, data, ctx, cfg)
            assert result.final_train_accuracy == 1.0, f"{name} failed to overfit"
            from vekit.models import forward_instance as fwd

            predictions[name] = [
                int(np.argmax(fwd(params, ctx, inst.tokens, image_id=inst.image_id)[0].data))
                for inst in instances
            ]
        index_perm = {LABEL_TO_INDEX[a]: LABEL_TO_INDEX[b] for a, b in perm.items()}
        assert predictions["perm"] == [index_perm[p] for p in predictions["base"]]
