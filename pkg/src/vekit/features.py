"""Precomputed image features: the VEF1 container and object-matrix views.

A feature file carries either CNN grid features (d*d objects of size k, one
per spatial cell) or ROI features (one pooled vector per detected region,
with pixel boxes kept for visualization). Files are little-endian:

    magic "VEF1" | u8 kind (0=grid, 1=roi) | u16 id_len + image_id utf-8
    u32 M | u32 feat_dim
    grid: u32 k, u32 d          (requires M == d*d and feat_dim == k)
    roi:  M x 4 float32 boxes   (x1, y1, x2, y2 in pixels)
    M x feat_dim float32 payload, row-major

The format is binary because feature files are large and evaluation must be
bit-reproducible across writers.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptionError, DimensionError, FormatError
from .numcore import Tensor, add_rowvec, matmul, relu

MAGIC = b"VEF1"
_KIND_CODE = {"grid": 0, "roi": 1}
_KIND_NAME = {0: "grid", 1: "roi"}

DEFAULT_GRID_K = 2048
DEFAULT_GRID_D = 7
DEFAULT_TOP_ROIS = 10


@dataclass
class FeatureSet:
    """One image's object matrix plus the metadata its kind needs."""

    image_id: str
    kind: str
    objects: Tensor               # M x feat_dim
    grid_shape: tuple | None = None   # (k, d) when kind == "grid"
    boxes: np.ndarray | None = None   # M x 4 float32 when kind == "roi"

    @property
    def count(self):
        return self.objects.shape[0]

    @property
    def feat_dim(self):
        return self.objects.shape[1]

    @classmethod
    def grid(cls, image_id, maps):
        """Build a grid feature set from k feature maps of size d x d."""
        arr = maps.data if isinstance(maps, Tensor) else np.asarray(maps)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise DimensionError(f"grid maps must be k x d x d, got {arr.shape}")
        k, d = arr.shape[0], arr.shape[1]
        return cls(
            image_id=image_id,
            kind="grid",
            objects=grid_to_objects(maps),
            grid_shape=(k, d),
        )

    @classmethod
    def roi(cls, image_id, objects, boxes):
        obj = objects if isinstance(objects, Tensor) else Tensor(objects)
        boxes = np.asarray(boxes, dtype=np.float32).reshape(obj.shape[0], 4)
        return cls(image_id=image_id, kind="roi", objects=obj, boxes=boxes)


def grid_to_objects(maps):
    """View k x d x d feature maps as (d*d) x k objects, row-major over cells."""
    arr = maps.data if isinstance(maps, Tensor) else np.asarray(maps)
    if arr.ndim != 3:
        raise DimensionError(f"grid maps must be 3-d, got shape {arr.shape}")
    k, d1, d2 = arr.shape
    objects = np.ascontiguousarray(arr.transpose(1, 2, 0).reshape(d1 * d2, k))
    return Tensor(objects)


def objects_to_grid(objects, k, d):
    """Inverse of grid_to_objects; reconstructs the k x d x d maps exactly."""
    arr = objects.data if isinstance(objects, Tensor) else np.asarray(objects)
    if arr.shape != (d * d, k):
        raise DimensionError(f"objects shape {arr.shape} does not match k={k}, d={d}")
    return Tensor(np.ascontiguousarray(arr.reshape(d, d, k).transpose(2, 0, 1)))


@dataclass
class ProjectionParams:
    """Affine + ReLU projection of per-region features onto the shared width."""

    w: Tensor
    b: Tensor

    @classmethod
    def init(cls, feat_dim, out_dim, rng):
        bound = np.sqrt(6.0 / (feat_dim + out_dim))
        return cls(
            w=Tensor(rng.uniform(-bound, bound, size=(feat_dim, out_dim)), requires_grad=True),
            b=Tensor(np.zeros((1, out_dim)), requires_grad=True),
        )

    def named(self, prefix=""):
        return {f"{prefix}w": self.w, f"{prefix}b": self.b}


def project_regions(objects, params):
    """Project every object row: relu(objects @ W + b)."""
    if objects.shape[1] != params.w.shape[0]:
        raise DimensionError(
            f"projection expects {params.w.shape[0]}-d objects, got {objects.shape}"
        )
    return relu(add_rowvec(matmul(objects, params.w), params.b))


# ---------------------------------------------------------------------------
# VEF1 serialization
# ---------------------------------------------------------------------------

def write_feature_file(path, fs):
    """Serialize a FeatureSet; payload is float32 regardless of build precision."""
    if fs.kind not in _KIND_CODE:
        raise FormatError(f"unknown feature kind {fs.kind!r}")
    image_id = fs.image_id.encode("utf-8")
    if len(image_id) > 0xFFFF:
        raise FormatError("image id longer than 65535 bytes")
    m, feat_dim = fs.objects.shape
    parts = [MAGIC, struct.pack("<BH", _KIND_CODE[fs.kind], len(image_id)), image_id,
             struct.pack("<II", m, feat_dim)]
    if fs.kind == "grid":
        k, d = fs.grid_shape
        if m != d * d or feat_dim != k:
            raise FormatError(f"grid geometry k={k}, d={d} inconsistent with {m}x{feat_dim}")
        parts.append(struct.pack("<II", k, d))
    else:
        boxes = np.asarray(fs.boxes, dtype="<f4").reshape(m, 4)
        parts.append(boxes.tobytes())
    parts.append(np.ascontiguousarray(fs.objects.data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, blob):
        self.blob = blob
        self.off = 0

    def take(self, n, what):
        if self.off + n > len(self.blob):
            raise CorruptionError(
                f"truncated reading {what}: need {n} bytes at offset {self.off}, "
                f"file has {len(self.blob)}",
                byte_offset=self.off,
            )
        chunk = self.blob[self.off:self.off + n]
        self.off += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_feature_file(path):
    """Parse a VEF1 file, validating magic, kind and shape consistency."""
    rd = _Reader(Path(path).read_bytes())
    magic = rd.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}; expected {MAGIC!r}")
    (kind_code, id_len) = rd.unpack("<BH", "header")
    if kind_code not in _KIND_NAME:
        raise FormatError(f"unknown kind byte {kind_code}")
    kind = _KIND_NAME[kind_code]
    image_id = rd.take(id_len, "image id").decode("utf-8")
    (m, feat_dim) = rd.unpack("<II", "shape")

    grid_shape = None
    boxes = None
    if kind == "grid":
        (k, d) = rd.unpack("<II", "grid geometry")
        if m != d * d:
            raise FormatError(f"grid object count {m} != d*d for d={d}")
        if feat_dim != k:
            raise FormatError(f"grid feature dim {feat_dim} != k={k}")
        grid_shape = (k, d)
    else:
        raw = rd.take(m * 16, "roi boxes")
        boxes = np.frombuffer(raw, dtype="<f4").reshape(m, 4).copy()

    payload = rd.take(m * feat_dim * 4, "feature payload")
    if rd.off != len(rd.blob):
        raise CorruptionError(
            f"{len(rd.blob) - rd.off} trailing bytes after payload", byte_offset=rd.off
        )
    objects = np.frombuffer(payload, dtype="<f4").reshape(m, feat_dim)
    return FeatureSet(
        image_id=image_id,
        kind=kind,
        objects=Tensor(objects),
        grid_shape=grid_shape,
        boxes=boxes,
    )


class FeatureStore:
    """Directory of <image_id>.vef files with a small read cache."""

    def __init__(self, root, cache_size=256):
        self.root = Path(root)
        self.cache_size = cache_size
        self._cache = {}

    def path_for(self, image_id):
        return self.root / f"{image_id}.vef"

    def has(self, image_id):
        return self.path_for(image_id).exists()

    def get(self, image_id):
        fs = self._cache.get(image_id)
        if fs is None:
            path = self.path_for(image_id)
            if not path.exists():
                raise FileNotFoundError(f"no feature file for image {image_id!r} in {self.root}")
            fs = read_feature_file(path)
            if len(self._cache) >= self.cache_size:
                self._cache.pop(next(iter(self._cache)))
            self._cache[image_id] = fs
        return fs
