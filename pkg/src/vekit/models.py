"""Forward graphs for the entailment models, all producing (C, N, E) logits.

Architectures:
  hypothesis_only  text encoder -> FC(H,H) ReLU -> FC(H,3)
  te               two text encoders (caption premise + hypothesis),
                   concat -> FC(2H,H) ReLU -> FC(H,3)
  rn               shared per-object MLP over concat(object, text), summed,
                   then a linear head
  topdown/bottomup FC-scored attention over objects, separate projections
                   fused by elementwise product, two MLP heads summed
  eve_image/eve_roi projected objects -> self-attention -> text-image
                   attention, concat with text -> FC(2H,H) ReLU -> FC(H,3)

Every parameter tensor is named, seeded at init, and serializable to the
VEC1 checkpoint format (bit-exact round trip).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attention import self_attend, text_image_attend
from .errors import ConfigError, CorruptionError, FormatError, MissingInputError
from .features import FeatureSet, ProjectionParams, project_regions
from .numcore import (
    Tensor,
    add,
    add_rowvec,
    concat_cols,
    matmul,
    mul,
    relu,
    softmax_rows,
    sum_over_rows,
    tile_rows,
    transpose,
)
from .text import TextEncoderParams, encode_hypothesis

ARCHITECTURES = (
    "hypothesis_only", "te", "rn", "topdown", "bottomup", "eve_image", "eve_roi",
)

CLASS_ORDER = ("C", "N", "E")  # logit column order, fixed everywhere


@dataclass
class ModelDims:
    embed: int = 300      # word embedding width
    hidden: int = 300     # GRU state = text feature = shared attention width
    feat: int = 2048      # image object feature width (k)
    rn_hidden: int = 256
    classes: int = 3


@dataclass
class LinearParams:
    w: Tensor
    b: Tensor

    @classmethod
    def init(cls, in_dim, out_dim, rng):
        bound = np.sqrt(6.0 / (in_dim + out_dim))
        return cls(
            w=Tensor(rng.uniform(-bound, bound, size=(in_dim, out_dim)), requires_grad=True),
            b=Tensor(np.zeros((1, out_dim)), requires_grad=True),
        )

    def named(self, prefix=""):
        return {f"{prefix}w": self.w, f"{prefix}b": self.b}


def affine(x, p):
    return add_rowvec(matmul(x, p.w), p.b)


@dataclass
class ModelParams:
    """Named, seeded parameter bundle for one architecture."""

    arch: str
    dims: ModelDims
    text: TextEncoderParams
    premise: TextEncoderParams | None = None
    img_proj: ProjectionParams | None = None
    txt_proj: ProjectionParams | None = None
    att: LinearParams | None = None
    g1: ProjectionParams | None = None
    g2: ProjectionParams | None = None
    cls1: LinearParams | None = None
    cls2: LinearParams | None = None
    head_a1: LinearParams | None = None
    head_a2: LinearParams | None = None
    head_b1: LinearParams | None = None
    head_b2: LinearParams | None = None

    @classmethod
    def init(cls, arch, dims=None, seed=0):
        if arch not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {arch!r}")
        dims = dims or ModelDims()
        rng = np.random.default_rng(seed)
        h, k, c = dims.hidden, dims.feat, dims.classes
        p = cls(arch=arch, dims=dims, text=TextEncoderParams.init(dims.embed, h, rng))
        if arch == "hypothesis_only":
            p.cls1 = LinearParams.init(h, h, rng)
            p.cls2 = LinearParams.init(h, c, rng)
        elif arch == "te":
            p.premise = TextEncoderParams.init(dims.embed, h, rng)
            p.cls1 = LinearParams.init(2 * h, h, rng)
            p.cls2 = LinearParams.init(h, c, rng)
        elif arch == "rn":
            p.g1 = ProjectionParams.init(k + h, dims.rn_hidden, rng)
            p.g2 = ProjectionParams.init(dims.rn_hidden, dims.rn_hidden, rng)
            p.cls1 = LinearParams.init(dims.rn_hidden, c, rng)
        elif arch in ("topdown", "bottomup"):
            p.att = LinearParams.init(k + h, 1, rng)
            p.img_proj = ProjectionParams.init(k, h, rng)
            p.txt_proj = ProjectionParams.init(h, h, rng)
            p.head_a1 = LinearParams.init(h, h, rng)
            p.head_a2 = LinearParams.init(h, c, rng)
            p.head_b1 = LinearParams.init(h, h, rng)
            p.head_b2 = LinearParams.init(h, c, rng)
        else:  # eve_image / eve_roi
            p.img_proj = ProjectionParams.init(k, h, rng)
            p.cls1 = LinearParams.init(2 * h, h, rng)
            p.cls2 = LinearParams.init(h, c, rng)
        return p

    def named(self):
        out = dict(self.text.named(prefix="text."))
        for attr, prefix in (
            ("premise", "premise."), ("img_proj", "img_proj."), ("txt_proj", "txt_proj."),
            ("att", "att."), ("g1", "g1."), ("g2", "g2."), ("cls1", "cls1."),
            ("cls2", "cls2."), ("head_a1", "head_a1."), ("head_a2", "head_a2."),
            ("head_b1", "head_b1."), ("head_b2", "head_b2."),
        ):
            bundle = getattr(self, attr)
            if bundle is not None:
                out.update(bundle.named(prefix=prefix))
        return out

    def trainable(self):
        return [t for t in self.named().values() if t.requires_grad]


def infer_dims(arch, named):
    """Recover dimension metadata from tensor shapes (checkpoints carry none)."""
    dims = ModelDims(
        embed=named["text.mlp_w"].shape[0],
        hidden=named["text.gru.w_z"].shape[1],
    )
    if arch == "rn":
        dims.rn_hidden = named["g2.w"].shape[1]
        dims.feat = named["g1.w"].shape[0] - dims.hidden
        dims.classes = named["cls1.w"].shape[1]
    elif arch in ("topdown", "bottomup", "eve_image", "eve_roi"):
        dims.feat = named["img_proj.w"].shape[0]
        tail = "head_a2.w" if arch in ("topdown", "bottomup") else "cls2.w"
        dims.classes = named[tail].shape[1]
    else:
        dims.classes = named["cls2.w"].shape[1]
    return dims


# ---------------------------------------------------------------------------
# Forward graphs
# ---------------------------------------------------------------------------

def _check_arch(params, *allowed):
    if params.arch not in allowed:
        raise ConfigError(f"params are for {params.arch!r}, expected one of {allowed}")


def _classify(x, params):
    hidden = relu(affine(x, params.cls1))
    return affine(hidden, params.cls2)


def forward_hypothesis_only(tokens, params, ctx):
    """Text-only baseline: measures the dataset's hypothesis-conditioned bias floor."""
    _check_arch(params, "hypothesis_only")
    text_feat = encode_hypothesis(tokens, ctx.embeddings, params.text)
    return _classify(text_feat, params)


def forward_te(premise_tokens, hypothesis_tokens, params, ctx):
    """Caption-premise baseline: two independent encoders, concat, classify."""
    _check_arch(params, "te")
    p_feat = encode_hypothesis(premise_tokens, ctx.embeddings, params.premise)
    h_feat = encode_hypothesis(hypothesis_tokens, ctx.embeddings, params.text)
    return _classify(concat_cols([p_feat, h_feat]), params)


def forward_rn(objects, tokens, params, ctx):
    """Pairwise object-text interactions through a shared MLP, summed."""
    _check_arch(params, "rn")
    text_feat = encode_hypothesis(tokens, ctx.embeddings, params.text)
    m = objects.shape[0]
    pairs = concat_cols([objects, tile_rows(text_feat, m)])
    g_out = project_regions(project_regions(pairs, params.g1), params.g2)
    summed = sum_over_rows(g_out)
    return affine(summed, params.cls1)


def attention_pool(objects, text_feat, att):
    """FC-scored attention over objects: returns (1 x M weights, 1 x k attended)."""
    m = objects.shape[0]
    scores = affine(concat_cols([objects, tile_rows(text_feat, m)]), att)
    weights = softmax_rows(transpose(scores))
    return weights, matmul(weights, objects)


def forward_topdown(objects, tokens, params, ctx, roi_mode=False):
    """Attention over raw objects, product fusion, sum of two MLP heads."""
    _check_arch(params, "bottomup" if roi_mode else "topdown")
    text_feat = encode_hypothesis(tokens, ctx.embeddings, params.text)
    _, attended = attention_pool(objects, text_feat, params.att)
    img = project_regions(attended, params.img_proj)
    txt = project_regions(text_feat, params.txt_proj)
    fused = mul(img, txt)
    logits_a = affine(relu(affine(fused, params.head_a1)), params.head_a2)
    logits_b = affine(relu(affine(fused, params.head_b1)), params.head_b2)
    return add(logits_a, logits_b)


_EVE_KIND = {"eve_image": "grid", "eve_roi": "roi"}


def forward_eve(features, tokens, params, ctx):
    """Both EVE variants; returns (logits, 1 x M text-image attention mask)."""
    _check_arch(params, "eve_image", "eve_roi")
    expected = _EVE_KIND[params.arch]
    if features.kind != expected:
        raise ConfigError(
            f"{params.arch} needs {expected} features, got {features.kind} "
            f"for image {features.image_id!r}"
        )
    text_feat = encode_hypothesis(tokens, ctx.embeddings, params.text)
    projected = project_regions(features.objects, params.img_proj)
    attended_regions = self_attend(projected)
    result = text_image_attend(attended_regions, text_feat)
    fused = concat_cols([result.attended, text_feat])
    return _classify(fused, params), result.mask


# ---------------------------------------------------------------------------
# Instance-level dispatch
# ---------------------------------------------------------------------------

@dataclass
class ModelContext:
    """Everything a forward pass may need beyond its own parameters."""

    embeddings: object
    feature_store: object = None
    captions: dict = field(default_factory=dict)


def forward_instance(params, ctx, tokens, image_id=None):
    """Route one instance through its architecture; returns (logits, mask or None)."""
    arch = params.arch
    if arch == "hypothesis_only":
        return forward_hypothesis_only(tokens, params, ctx), None
    if arch == "te":
        caption = (ctx.captions or {}).get(image_id)
        if caption is None:
            raise MissingInputError(f"no caption for image {image_id!r}")
        from .text import tokenize

        return forward_te(tokenize(caption), tokens, params, ctx), None
    if ctx.feature_store is None:
        raise ConfigError(f"{arch} needs a feature store")
    features = ctx.feature_store.get(image_id)
    if arch == "rn":
        return forward_rn(features.objects, tokens, params, ctx), None
    if arch in ("topdown", "bottomup"):
        roi_mode = arch == "bottomup"
        expected = "roi" if roi_mode else "grid"
        if features.kind != expected:
            raise ConfigError(
                f"{arch} needs {expected} features, got {features.kind} "
                f"for image {image_id!r}"
            )
        return forward_topdown(features.objects, tokens, params, ctx, roi_mode=roi_mode), None
    return forward_eve(features, tokens, params, ctx)


# ---------------------------------------------------------------------------
# VEC1 checkpoints
# ---------------------------------------------------------------------------

VEC1_MAGIC = b"VEC1"


def save_checkpoint(path, params):
    """magic | u16 arch | u32 count | per tensor: u16 name, u8 rank, dims, f32 data."""
    named = params.named()
    arch = params.arch.encode("utf-8")
    parts = [VEC1_MAGIC, struct.pack("<H", len(arch)), arch, struct.pack("<I", len(named))]
    for name in sorted(named):
        data = named[name].data
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", data.ndim))
        parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(np.ascontiguousarray(data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path):
    blob = Path(path).read_bytes()
    off = 0

    def take(n, what):
        nonlocal off
        if off + n > len(blob):
            raise CorruptionError(
                f"truncated checkpoint reading {what} at offset {off}", byte_offset=off
            )
        chunk = blob[off:off + n]
        off += n
        return chunk

    if take(4, "magic") != VEC1_MAGIC:
        raise FormatError(f"bad checkpoint magic; expected {VEC1_MAGIC!r}")
    (arch_len,) = struct.unpack("<H", take(2, "arch length"))
    arch = take(arch_len, "arch").decode("utf-8")
    if arch not in ARCHITECTURES:
        raise FormatError(f"checkpoint carries unknown architecture {arch!r}")
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    named = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, "rank"))
        shape = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        n_values = int(np.prod(shape)) if rank else 1
        payload = take(4 * n_values, f"payload of {name}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(shape)
        named[name] = Tensor(arr.copy(), requires_grad=True)
    if off != len(blob):
        raise CorruptionError(f"{len(blob) - off} trailing bytes", byte_offset=off)
    return _assemble(arch, named)


def _assemble(arch, named):
    from .text import GruParams

    def linear(prefix):
        return LinearParams(w=named[f"{prefix}w"], b=named[f"{prefix}b"])

    def projection(prefix):
        return ProjectionParams(w=named[f"{prefix}w"], b=named[f"{prefix}b"])

    def text_encoder(prefix):
        gru = GruParams(**{
            f: named[f"{prefix}gru.{f}"]
            for f in ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h")
        })
        return TextEncoderParams(
            mlp_w=named[f"{prefix}mlp_w"], mlp_b=named[f"{prefix}mlp_b"], gru=gru
        )

    params = ModelParams(arch=arch, dims=infer_dims(arch, named), text=text_encoder("text."))
    if arch == "hypothesis_only":
        params.cls1, params.cls2 = linear("cls1."), linear("cls2.")
    elif arch == "te":
        params.premise = text_encoder("premise.")
        params.cls1, params.cls2 = linear("cls1."), linear("cls2.")
    elif arch == "rn":
        params.g1, params.g2 = projection("g1."), projection("g2.")
        params.cls1 = linear("cls1.")
    elif arch in ("topdown", "bottomup"):
        params.att = linear("att.")
        params.img_proj, params.txt_proj = projection("img_proj."), projection("txt_proj.")
        params.head_a1, params.head_a2 = linear("head_a1."), linear("head_a2.")
        params.head_b1, params.head_b2 = linear("head_b1."), linear("head_b2.")
    else:
        params.img_proj = projection("img_proj.")
        params.cls1, params.cls2 = linear("cls1."), linear("cls2.")
    return params
