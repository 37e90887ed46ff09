"""Hypothesis text processing: tokenization, vocabulary, embeddings, GRU encoder.

The encoding pipeline is embed -> trainable MLP projection -> self-attention
over the token sequence -> left-to-right GRU scan; the final hidden state is
the sentence feature. Word embeddings are frozen (the MLP adapts them), PAD
positions are masked out of attention and skipped by the GRU scan.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import self_attend
from .errors import ConfigError, ParseError
from .numcore import (
    Tensor,
    add,
    add_rowvec,
    matmul,
    mul,
    relu,
    scale,
    sigmoid,
    slice_rows,
    tanh,
)
from .numcore.config import get_dtype

# split on whitespace, lowercase, then delete these characters entirely
PUNCTUATION = "`'\",.?!-"

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD = 0
UNK = 1

_STRIP = str.maketrans("", "", PUNCTUATION)


def tokenize(sentence):
    """Lowercased whitespace tokens with punctuation characters removed."""
    out = []
    for word in sentence.split():
        cleaned = word.lower().translate(_STRIP)
        if cleaned:
            out.append(cleaned)
    return out


class Vocabulary:
    """Token <-> index map with fixed PAD(0) and UNK(1) entries."""

    def __init__(self):
        self.index_to_token = [PAD_TOKEN, UNK_TOKEN]
        self.token_to_index = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}

    def __len__(self):
        return len(self.index_to_token)

    def __contains__(self, token):
        return token in self.token_to_index

    def add(self, token):
        idx = self.token_to_index.get(token)
        if idx is None:
            idx = len(self.index_to_token)
            self.token_to_index[token] = idx
            self.index_to_token.append(token)
        return idx

    def index(self, token):
        return self.token_to_index.get(token, UNK)

    def token(self, index):
        return self.index_to_token[index]

    def ids(self, tokens):
        return [self.index(t) for t in tokens]


def build_vocab(corpus):
    """One entry per distinct token, in first-occurrence order (deterministic)."""
    vocab = Vocabulary()
    for tokens in corpus:
        for token in tokens:
            vocab.add(token)
    return vocab


@dataclass
class EmbeddingTable:
    """Frozen |V| x dim embedding matrix aligned with a vocabulary.

    Row PAD is all zeros and never updated; rows absent from the source file
    are drawn from seeded U(-0.05, 0.05). coverage is the fraction of
    non-special vocabulary tokens found in the file.
    """

    matrix: np.ndarray
    vocab: Vocabulary
    coverage: float = 1.0
    trainable: bool = False

    @property
    def dim(self):
        return self.matrix.shape[1]

    def rows(self, ids):
        return self.matrix[np.asarray(ids, dtype=np.int64)]

    @classmethod
    def random(cls, vocab, dim, seed=0):
        """Seeded stand-in table for fixtures and synthetic runs."""
        rng = np.random.default_rng(seed)
        matrix = rng.uniform(-0.05, 0.05, size=(len(vocab), dim)).astype(get_dtype())
        matrix[PAD] = 0.0
        return cls(matrix=matrix, vocab=vocab, coverage=0.0)


def load_embeddings(path, vocab, dim=300, seed=0):
    """Read a "token v1 ... v_dim" text file into an EmbeddingTable."""
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-0.05, 0.05, size=(len(vocab), dim)).astype(get_dtype())
    found = 0
    file_dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split(" ")
            if file_dim is None:
                file_dim = len(fields) - 1
                if file_dim != dim:
                    raise ConfigError(
                        f"embedding file carries {file_dim}-d vectors, expected {dim}-d"
                    )
            if len(fields) != dim + 1:
                raise ParseError(
                    f"line {line_no}: expected {dim + 1} fields, got {len(fields)}",
                    line_number=line_no,
                )
            token = fields[0]
            idx = vocab.token_to_index.get(token)
            if idx is not None and idx != PAD:
                try:
                    matrix[idx] = [float(v) for v in fields[1:]]
                except ValueError as err:
                    raise ParseError(f"line {line_no}: {err}", line_number=line_no) from None
                found += 1
    matrix[PAD] = 0.0
    real_tokens = len(vocab) - 2
    coverage = found / real_tokens if real_tokens else 1.0
    return EmbeddingTable(matrix=matrix, vocab=vocab, coverage=coverage)


def _glorot(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass
class GruParams:
    """Update gate z, reset gate r, and candidate weights of one GRU cell."""

    w_z: Tensor
    u_z: Tensor
    b_z: Tensor
    w_r: Tensor
    u_r: Tensor
    b_r: Tensor
    w_h: Tensor
    u_h: Tensor
    b_h: Tensor

    @classmethod
    def init(cls, input_dim, hidden, rng):
        def w(fan_in, fan_out):
            return Tensor(_glorot(rng, fan_in, fan_out), requires_grad=True)

        def b():
            return Tensor(np.zeros((1, hidden)), requires_grad=True)

        return cls(
            w_z=w(input_dim, hidden), u_z=w(hidden, hidden), b_z=b(),
            w_r=w(input_dim, hidden), u_r=w(hidden, hidden), b_r=b(),
            w_h=w(input_dim, hidden), u_h=w(hidden, hidden), b_h=b(),
        )

    @property
    def hidden(self):
        return self.w_z.shape[1]

    def named(self, prefix=""):
        return {
            f"{prefix}w_z": self.w_z, f"{prefix}u_z": self.u_z, f"{prefix}b_z": self.b_z,
            f"{prefix}w_r": self.w_r, f"{prefix}u_r": self.u_r, f"{prefix}b_r": self.b_r,
            f"{prefix}w_h": self.w_h, f"{prefix}u_h": self.u_h, f"{prefix}b_h": self.b_h,
        }


def gru_step(x, h_prev, p):
    """One GRU update: h' = (1 - z) * h + z * h~."""
    z = sigmoid(add_rowvec(add(matmul(x, p.w_z), matmul(h_prev, p.u_z)), p.b_z))
    r = sigmoid(add_rowvec(add(matmul(x, p.w_r), matmul(h_prev, p.u_r)), p.b_r))
    h_cand = tanh(add_rowvec(add(matmul(x, p.w_h), matmul(mul(r, h_prev), p.u_h)), p.b_h))
    keep = add(scale(z, -1.0), 1.0)
    return add(mul(keep, h_prev), mul(z, h_cand))


@dataclass
class TextEncoderParams:
    """Trainable pieces of the text branch: MLP projection plus the GRU."""

    mlp_w: Tensor
    mlp_b: Tensor
    gru: GruParams

    @classmethod
    def init(cls, embed_dim, hidden, rng):
        return cls(
            mlp_w=Tensor(_glorot(rng, embed_dim, embed_dim), requires_grad=True),
            mlp_b=Tensor(np.zeros((1, embed_dim)), requires_grad=True),
            gru=GruParams.init(embed_dim, hidden, rng),
        )

    @property
    def hidden(self):
        return self.gru.hidden

    def named(self, prefix=""):
        out = {f"{prefix}mlp_w": self.mlp_w, f"{prefix}mlp_b": self.mlp_b}
        out.update(self.gru.named(prefix=f"{prefix}gru."))
        return out


def _to_ids(tokens, vocab):
    ids = []
    for t in tokens:
        if isinstance(t, str):
            ids.append(vocab.index(t))
        else:
            ids.append(int(t))
    return ids


def encode_hypothesis(tokens, table, params):
    """Encode a token sequence into the 1 x hidden sentence feature.

    PAD entries are masked out of self-attention scores and skipped by the
    GRU scan, so padded and unpadded encodings of the same hypothesis are
    identical. An empty (or all-PAD) input encodes as a single UNK token.
    """
    ids = _to_ids(tokens, table.vocab)
    valid = [i != PAD for i in ids]
    if not any(valid):
        ids = [UNK]
        valid = [True]

    embedded = Tensor(table.rows(ids))
    projected = relu(add_rowvec(matmul(embedded, params.mlp_w), params.mlp_b))
    attended = self_attend(projected, valid=None if all(valid) else valid)

    hidden = params.hidden
    h = Tensor(np.zeros((1, hidden)))
    for t, keep in enumerate(valid):
        if keep:
            h = gru_step(slice_rows(attended, t, t + 1), h, params.gru)
    return h
