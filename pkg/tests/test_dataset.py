"""Dataset pipeline tests: parsing, construction, audit, stats, batching."""

import json
from collections import Counter
from pathlib import Path

import pytest

from vekit.dataset import (
    LABEL_TO_INDEX,
    AuditReport,
    SnliRecord,
    VEDataset,
    VEInstance,
    build_snli_ve,
    compute_stats,
    derive_image_id,
    load_dataset,
    load_split,
    make_batches,
    parse_snli,
    random_split,
    save_dataset,
    validate_partitions,
    write_histogram_csv,
)
from vekit.errors import ConfigError, ParseError, SchemaError, ValidationError
from vekit.text import build_vocab

FIXTURES = Path(__file__).parent / "fixtures"


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write((row if isinstance(row, str) else json.dumps(row)) + "\n")


def _record(gold="entailment", cap="a.jpg#0", pid="p1", s1="A premise.", s2="A hypothesis."):
    return {"gold_label": gold, "sentence1": s1, "sentence2": s2, "captionID": cap, "pairID": pid}


class TestParseSnli:
    def test_three_records_in_order(self, tmp_path):
        path = tmp_path / "x.jsonl"
        _write_jsonl(path, [_record(pid=f"p{i}") for i in range(3)])
        records = list(parse_snli(path))
        assert [r.pair_id for r in records] == ["p0", "p1", "p2"]
        assert [r.line_number for r in records] == [1, 2, 3]

    def test_no_consensus_retained_at_parse_stage(self, tmp_path):
        path = tmp_path / "x.jsonl"
        _write_jsonl(path, [_record(gold="-")])
        records = list(parse_snli(path))
        assert len(records) == 1 and records[0].gold_label == "-"

    def test_corrupt_line_with_continue_flag(self, tmp_path):
        path = tmp_path / "x.jsonl"
        _write_jsonl(path, [_record(pid="p1"), "{not json", _record(pid="p3")])
        diagnostics = []
        records = list(parse_snli(path, on_error="continue", diagnostics=diagnostics))
        assert [r.pair_id for r in records] == ["p1", "p3"]
        assert len(diagnostics) == 1 and "line 2" in diagnostics[0]

    def test_corrupt_line_aborts_by_default(self, tmp_path):
        path = tmp_path / "x.jsonl"
        _write_jsonl(path, [_record(), "{not json"])
        with pytest.raises(ParseError) as exc:
            list(parse_snli(path))
        assert exc.value.line_number == 2

    def test_missing_field_is_schema_error(self, tmp_path):
        path = tmp_path / "x.jsonl"
        row = _record()
        del row["pairID"]
        _write_jsonl(path, [row])
        with pytest.raises(SchemaError):
            list(parse_snli(path))


class TestDeriveImageId:
    def test_flickr_style(self):
        assert derive_image_id("3416050480.jpg#4") == "3416050480.jpg"

    def test_index_zero(self):
        assert derive_image_id("x.jpg#0") == "x.jpg"

    def test_missing_index_warns_and_passes_through(self):
        diagnostics = []
        assert derive_image_id("noindex.jpg", diagnostics=diagnostics) == "noindex.jpg"
        assert len(diagnostics) == 1


class TestBuildSnliVe:
    def _fixture_dataset(self):
        records = parse_snli(FIXTURES / "snli_18.jsonl")
        split = load_split(FIXTURES / "split_6.json")
        return build_snli_ve(records, split)

    def test_bundled_fixture_counts(self):
        ds = self._fixture_dataset()
        assert len(ds.train) == 10 and len(ds.val) == 3 and len(ds.test) == 2
        train_classes = Counter(i.label for i in ds.train)
        assert train_classes == {"E": 4, "N": 3, "C": 3}
        assert Counter(i.label for i in ds.val) == {"E": 1, "N": 1, "C": 1}
        assert Counter(i.label for i in ds.test) == {"E": 1, "C": 1}

    def test_no_consensus_dropped_everywhere(self):
        ds = self._fixture_dataset()
        for instances in ds.partitions().values():
            assert all(inst.label in ("C", "N", "E") for inst in instances)
        assert len(ds) == 15  # 18 records, 3 without consensus

    def test_partitions_disjoint_by_image(self):
        ds = self._fixture_dataset()
        assert not (ds.image_ids("train") & ds.image_ids("val"))
        assert not (ds.image_ids("train") & ds.image_ids("test"))
        assert not (ds.image_ids("val") & ds.image_ids("test"))

    def test_six_by_three_hand_assignment(self):
        rows = []
        for i in range(6):
            for j, gold in enumerate(("entailment", "neutral", "contradiction")):
                rows.append(
                    _record(gold=gold, cap=f"im{i}.jpg#{j}", pid=f"q{i}_{j}", s2="Some words here.")
                )
        split = {
            "train": [f"im{i}.jpg" for i in range(4)],
            "val": ["im4.jpg"],
            "test": ["im5.jpg"],
        }
        records = [
            SnliRecord(
                gold_label=row["gold_label"],
                premise_text=row["sentence1"],
                hypothesis_text=row["sentence2"],
                caption_id=row["captionID"],
                pair_id=row["pairID"],
            )
            for row in rows
        ]
        ds = build_snli_ve(records, split)
        assert (len(ds.train), len(ds.val), len(ds.test)) == (12, 3, 3)

    def test_all_no_consensus_gives_empty_dataset(self, tmp_path):
        path = tmp_path / "x.jsonl"
        _write_jsonl(path, [_record(gold="-", pid=f"p{i}") for i in range(4)])
        ds = build_snli_ve(parse_snli(path), {"train": ["a.jpg"], "val": [], "test": []})
        assert len(ds) == 0

    def test_unsplit_image_dropped_with_warning(self, tmp_path):
        path = tmp_path / "x.jsonl"
        _write_jsonl(path, [_record(cap="unknown.jpg#0")])
        diagnostics = []
        ds = build_snli_ve(
            parse_snli(path), {"train": [], "val": [], "test": []}, diagnostics=diagnostics
        )
        assert len(ds) == 0 and any("unknown.jpg" in d for d in diagnostics)

    def test_unsplit_image_abort_mode(self, tmp_path):
        path = tmp_path / "x.jsonl"
        _write_jsonl(path, [_record(cap="unknown.jpg#0")])
        with pytest.raises(ValidationError):
            build_snli_ve(
                parse_snli(path),
                {"train": [], "val": [], "test": []},
                on_missing_image="abort",
            )

    def test_duplicate_pair_id_deduped(self, tmp_path):
        path = tmp_path / "x.jsonl"
        _write_jsonl(path, [_record(pid="same"), _record(gold="neutral", pid="same")])
        diagnostics = []
        ds = build_snli_ve(
            parse_snli(path), {"train": ["a.jpg"], "val": [], "test": []}, diagnostics=diagnostics
        )
        assert len(ds.train) == 1 and ds.train[0].label == "E"
        assert any("same" in d for d in diagnostics)

    def test_rebuild_is_byte_identical(self, tmp_path):
        ds1 = self._fixture_dataset()
        ds2 = self._fixture_dataset()
        save_dataset(ds1, tmp_path / "one")
        save_dataset(ds2, tmp_path / "two")
        for part in ("train", "val", "test"):
            a = (tmp_path / "one" / f"{part}.jsonl").read_bytes()
            b = (tmp_path / "two" / f"{part}.jsonl").read_bytes()
            assert a == b


class TestValidatePartitions:
    def test_fixture_passes(self):
        ds = TestBuildSnliVe()._fixture_dataset()
        report = validate_partitions(ds)
        assert report.passed
        assert all(not shared for shared in report.intersections.values())

    def test_overlap_fixture_fails_naming_image(self):
        ds = load_dataset(FIXTURES / "overlap")
        report = validate_partitions(ds)
        assert not report.passed
        assert report.intersections["train/test"] == ["shared.jpg"]

    def test_table_shaped_balance_passes(self):
        # per-class counts shaped like the full dataset: spread under 1%
        ds = VEDataset()
        for label, count in (("E", 1769), ("N", 1760), ("C", 1765)):
            for i in range(count):
                ds.train.append(VEInstance(f"im{i % 300}.jpg", ["a"], label))
        report = validate_partitions(ds)
        assert report.balance_spread["train"] < 0.01
        assert report.balance_ok

    def test_imbalance_reported_not_fatal(self):
        ds = VEDataset(
            train=[VEInstance("a.jpg", ["x"], "E"), VEInstance("a.jpg", ["y"], "E"),
                   VEInstance("a.jpg", ["z"], "N"), VEInstance("a.jpg", ["w"], "C")],
        )
        report = validate_partitions(ds)
        assert report.passed  # disjointness is the only hard failure
        assert not report.balance_ok


class TestComputeStats:
    def test_single_instance(self):
        ds = VEDataset(train=[VEInstance("a.jpg", ["one", "two", "three", "four", "five"], "E")])
        stats = compute_stats(ds)
        assert stats.length_mean == stats.length_median == stats.length_max == 5
        assert stats.length_mode == 5

    def test_hand_arithmetic(self):
        ds = VEDataset(
            train=[VEInstance("a.jpg", ["a"] * 3, "E"), VEInstance("a.jpg", ["b"] * 3, "N")],
            val=[VEInstance("b.jpg", ["c"] * 7, "C")],
        )
        stats = compute_stats(ds)
        assert abs(stats.length_mean - 13 / 3) < 0.01
        assert stats.length_median == 3
        assert stats.length_mode == 3
        assert stats.length_max == 7

    def test_matches_naive_reference(self):
        ds = TestBuildSnliVe()._fixture_dataset()
        stats = compute_stats(ds)
        # independent single-pass counter
        lengths = [len(i.tokens) for p in ds.partitions().values() for i in p]
        vocab = {t for p in ds.partitions().values() for i in p for t in i.tokens}
        assert stats.length_max == max(lengths)
        assert stats.length_mean == sum(lengths) / len(lengths)
        assert stats.vocab_size == len(vocab)
        assert stats.histogram == dict(Counter(lengths))
        assert sum(stats.histogram.values()) == len(lengths)

    def test_empty_dataset_zeroes(self):
        stats = compute_stats(VEDataset())
        assert stats.length_mean == 0 and stats.vocab_size == 0

    def test_histogram_csv(self, tmp_path):
        ds = TestBuildSnliVe()._fixture_dataset()
        stats = compute_stats(ds)
        path = tmp_path / "hist.csv"
        write_histogram_csv(stats, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "length,count"
        assert len(lines) == len(stats.histogram) + 1


class TestMakeBatches:
    def _instances(self, lengths, label="E"):
        return [
            VEInstance(f"im{i}.jpg", [f"tok{i}_{j}" for j in range(n)], label)
            for i, n in enumerate(lengths)
        ]

    def test_padding_to_batch_max(self):
        batches = make_batches(self._instances([4, 9, 6]), batch_size=3)
        assert len(batches) == 1
        batch = batches[0]
        assert all(len(row) == 9 for row in batch.tokens)
        assert sum(batch.pad_mask[0]) == 5 and sum(batch.pad_mask[2]) == 3
        assert batch.pad_mask[0][4:] == [True] * 5

    def test_batch_count_and_sizes(self):
        batches = make_batches(self._instances([3] * 130), batch_size=64)
        assert [len(b) for b in batches] == [64, 64, 2]

    def test_same_seed_same_sequence(self):
        instances = self._instances(range(1, 40))
        a = make_batches(instances, 8, seed=99)
        b = make_batches(instances, 8, seed=99)
        assert [x.image_ids for x in a] == [x.image_ids for x in b]

    def test_no_seed_keeps_order(self):
        instances = self._instances([2, 3, 4])
        batch = make_batches(instances, 8)[0]
        assert batch.image_ids == ["im0.jpg", "im1.jpg", "im2.jpg"]

    def test_vocab_rows_are_ids_with_pad_zero(self):
        instances = self._instances([2, 4])
        vocab = build_vocab([inst.tokens for inst in instances])
        batch = make_batches(instances, 2, vocab=vocab)[0]
        assert batch.tokens[0][2:] == [0, 0]
        assert all(isinstance(t, int) for row in batch.tokens for t in row)

    def test_labels_use_class_order(self):
        instances = [
            VEInstance("a.jpg", ["x"], "C"),
            VEInstance("a.jpg", ["x"], "N"),
            VEInstance("a.jpg", ["x"], "E"),
        ]
        batch = make_batches(instances, 3)[0]
        assert batch.labels == [0, 1, 2]
        assert LABEL_TO_INDEX == {"C": 0, "N": 1, "E": 2}

    def test_bad_batch_size(self):
        with pytest.raises(ConfigError):
            make_batches([], 0)


class TestSplitHandling:
    def test_load_split_rejects_overlap(self, tmp_path):
        path = tmp_path / "split.json"
        path.write_text(json.dumps({"train": ["a.jpg"], "val": ["a.jpg"], "test": []}))
        with pytest.raises(ConfigError):
            load_split(path)

    def test_load_split_requires_all_partitions(self, tmp_path):
        path = tmp_path / "split.json"
        path.write_text(json.dumps({"train": ["a.jpg"]}))
        with pytest.raises(ConfigError):
            load_split(path)

    def test_random_split_disjoint_and_seeded(self):
        ids = [f"im{i}.jpg" for i in range(50)]
        s1 = random_split(ids, seed=5)
        s2 = random_split(ids, seed=5)
        assert s1 == s2
        all_ids = s1["train"] + s1["val"] + s1["test"]
        assert sorted(all_ids) == sorted(ids)
        assert len(set(all_ids)) == len(all_ids)

    def test_disjointness_property_on_random_fixtures(self):
        import random as _random

        rng = _random.Random(13)
        for trial in range(20):
            n_images = rng.randint(1, 12)
            images = [f"r{trial}_{i}.jpg" for i in range(n_images)]
            split = random_split(images, seed=trial)
            records = []
            for i, image in enumerate(images):
                for j in range(rng.randint(1, 3)):
                    gold = rng.choice(["entailment", "neutral", "contradiction", "-"])
                    records.append(
                        SnliRecord(gold, "p", "some words here", f"{image}#{j}", f"t{trial}_{i}_{j}")
                    )
            ds = build_snli_ve(records, split)
            report = validate_partitions(ds)
            assert report.passed


class TestRoundTripSerialization:
    def test_save_load_preserves_instances(self, tmp_path):
        ds = TestBuildSnliVe()._fixture_dataset()
        save_dataset(ds, tmp_path)
        back = load_dataset(tmp_path)
        for part in ("train", "val", "test"):
            orig = ds.partitions()[part]
            loaded = back.partitions()[part]
            assert [(i.image_id, i.tokens, i.label) for i in orig] == [
                (i.image_id, i.tokens, i.label) for i in loaded
            ]
