"""Shared toy fixtures: tiny vocab/embeddings, in-memory features, contexts."""

import time

import numpy as np
import pytest


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    setattr(item, f"rep_{report.when}", report)


@pytest.fixture
def criterion(request, capsys):
    """Print one visible pass/fail line per acceptance criterion."""
    label = request.node.name.replace("test_", "", 1)
    start = time.time()
    yield
    elapsed = time.time() - start
    rep = getattr(request.node, "rep_call", None)
    if rep is None:
        return
    status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
    with capsys.disabled():
        print(f"[{status}] acceptance: {label} ({elapsed:.2f}s)")

from vekit.features import FeatureSet
from vekit.models import ModelContext, ModelDims
from vekit.text import EmbeddingTable, build_vocab

# toy bounds used for gradient checks: M <= 4, k <= 6, H <= 5, T <= 4
TOY_DIMS = ModelDims(embed=4, hidden=5, feat=6, rn_hidden=4, classes=3)
TOY_TOKENS = ["sun", "moon", "star"]


class MemoryFeatureStore:
    """Duck-typed FeatureStore over a dict; keeps gradcheck tests off disk."""

    def __init__(self):
        self.data = {}

    def put(self, fs):
        self.data[fs.image_id] = fs

    def has(self, image_id):
        return image_id in self.data

    def get(self, image_id):
        if image_id not in self.data:
            raise FileNotFoundError(f"no feature set for {image_id!r}")
        return self.data[image_id]


def toy_vocab():
    return build_vocab([["sun", "moon", "star", "sky", "sea", "sand"]])


def toy_context(dims=TOY_DIMS, seed=7, with_features=True):
    vocab = toy_vocab()
    table = EmbeddingTable.random(vocab, dims.embed, seed=seed)
    store = MemoryFeatureStore()
    if with_features:
        rng = np.random.default_rng(seed + 1)
        d = 2
        maps = rng.standard_normal((dims.feat, d, d))
        store.put(FeatureSet.grid("toy_grid.jpg", maps))
        m = 3
        objects = rng.standard_normal((m, dims.feat))
        boxes = np.array([[0, 0, 10, 10], [5, 5, 20, 20], [1, 2, 3, 4]], dtype=np.float32)
        store.put(FeatureSet.roi("toy_roi.jpg", objects, boxes))
    captions = {"toy_grid.jpg": "A bright sun over the sea.", "toy_roi.jpg": "Sand and stars."}
    return ModelContext(embeddings=table, feature_store=store, captions=captions)


@pytest.fixture
def ctx():
    return toy_context()
