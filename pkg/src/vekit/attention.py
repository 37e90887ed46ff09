"""Scaled dot-product attention and its two deployments.

One mechanism, two wirings: self-attention relates rows of a single feature
matrix to each other; text-image attention scores image regions against a
single text feature row and fuses them into one attended vector. The mask is
``softmax_rows(R Qᵀ / sqrt(d_k))`` and the attended output is ``mask @ Q``,
so every output row is a convex combination of query rows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError
from .numcore import Tensor, add_rowvec, matmul, scale, softmax_rows, transpose

# effectively -inf for masked score entries, without producing inf - inf = nan
MASK_PENALTY = -1e30


@dataclass
class AttentionResult:
    """mask: N×M attention weights (each row sums to 1); attended: mask @ Q."""

    mask: Tensor
    attended: Tensor


def sdp_attention(q, r, valid=None):
    """Attend reference rows R over query rows Q.

    ``valid``, when given, flags which Q rows may receive weight; masked rows
    get a large negative score before the softmax so their weight underflows
    to exactly zero (padding must not leak into attention).
    """
    if q.data.ndim != 2 or r.data.ndim != 2:
        raise DimensionError(f"attention needs 2-d tensors, got {q.shape} and {r.shape}")
    m, d_k = q.shape
    n, d_r = r.shape
    if d_k != d_r:
        raise DimensionError(f"feature dimensions disagree: Q is {q.shape}, R is {r.shape}")
    if m < 1 or n < 1 or d_k < 1:
        raise DomainError(f"attention over empty tensors: Q {q.shape}, R {r.shape}")

    scores = scale(matmul(r, transpose(q)), 1.0 / math.sqrt(d_k))
    if valid is not None:
        keep = np.asarray(valid, dtype=bool).reshape(-1)
        if keep.shape[0] != m:
            raise DimensionError(f"valid mask covers {keep.shape[0]} rows, Q has {m}")
        if not keep.any():
            raise DomainError("every query row is masked out")
        if not keep.all():
            penalty = np.where(keep, 0.0, MASK_PENALTY).reshape(1, m)
            scores = add_rowvec(scores, Tensor(penalty))
    mask = softmax_rows(scores)
    return AttentionResult(mask=mask, attended=matmul(mask, q))


def self_attend(x, valid=None):
    """Relate rows of one matrix to each other: Q and R are the same tensor."""
    return sdp_attention(x, x, valid=valid).attended


def text_image_attend(image_feats, text_feat):
    """Weight image regions by a single text feature row and fuse them.

    The query matrix is the image features, the reference is the one text row,
    so the result is a 1×d_k attended image vector; the 1×M mask is kept on
    the result for visualization export.
    """
    if text_feat.data.ndim != 2 or text_feat.shape[0] != 1:
        raise DimensionError(f"text reference must be a single row, got {text_feat.shape}")
    return sdp_attention(image_feats, text_feat)
