"""Dense tensors with recorded operations and reverse-mode gradients.

Every forward operation links its output to its inputs and stores a
vector-Jacobian closure; ``backward`` replays those closures in reverse
topological order. Graphs are rebuilt per forward pass (define-by-run), so
variable-length inputs cost nothing extra. Shapes are explicit and row-major;
the only implicit broadcast is tensor-with-scalar — everything else must go
through a dedicated op (``add_rowvec``, ``tile_rows``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, DimensionError, DomainError
from . import kernels
from .config import get_dtype


def _coerce(data):
    arr = np.asarray(data, dtype=get_dtype())
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, arr.shape[0])
    return np.ascontiguousarray(arr)


class Tensor:
    """A dense real array plus the bookkeeping reverse-mode needs.

    Scalars coerce to shape (1, 1) and flat sequences to a single row, so the
    2-D operations below apply uniformly. ``grad`` is populated by
    ``backward`` and accumulates across calls until ``zero_grad``.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "inputs", "_vjp")

    def __init__(self, data, requires_grad=False):
        self.data = _coerce(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op = "leaf"
        self.inputs = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, scale(other, -1.0))
        return add(self, -float(other))

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad=False):
    return Tensor(data, requires_grad=requires_grad)


def _from_op(data, op, inputs, vjp):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = any(t.requires_grad for t in inputs)
    out.grad = None
    out.op = op
    out.inputs = tuple(inputs)
    out._vjp = vjp if out.requires_grad else None
    return out


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _require_2d(t, op):
    if t.data.ndim != 2:
        raise DimensionError(f"{op} requires a 2-d tensor, got shape {t.shape}")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def matmul(a, b):
    """C = A @ B with dA = dC Bᵀ and dB = Aᵀ dC."""
    a, b = _as_tensor(a), _as_tensor(b)
    _require_2d(a, "matmul")
    _require_2d(b, "matmul")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    out = ad @ bd

    def vjp(g):
        return (
            g @ bd.T if a.requires_grad else None,
            ad.T @ g if b.requires_grad else None,
        )

    return _from_op(out, "matmul", (a, b), vjp)


def transpose(a):
    a = _as_tensor(a)
    _require_2d(a, "transpose")
    out = np.ascontiguousarray(a.data.T)

    def vjp(g):
        return (np.ascontiguousarray(g.T),)

    return _from_op(out, "transpose", (a,), vjp)


def softmax_rows(x):
    """Row-wise softmax with per-row max subtraction for stability."""
    x = _as_tensor(x)
    _require_2d(x, "softmax_rows")
    n, m = x.shape
    if n == 0 or m == 0:
        raise DomainError(f"softmax_rows over empty dimension: shape {x.shape}")
    y = kernels.softmax_rows(x.data)

    def vjp(g):
        return (kernels.softmax_rows_grad(y, np.ascontiguousarray(g)),)

    return _from_op(y, "softmax_rows", (x,), vjp)


def add(a, b):
    a = _as_tensor(a)
    if isinstance(b, Tensor):
        if a.shape != b.shape:
            raise DimensionError(f"add shapes disagree: {a.shape} vs {b.shape}")
        out = a.data + b.data

        def vjp(g):
            return (g, g)

        return _from_op(out, "add", (a, b), vjp)
    s = float(b)
    out = a.data + s

    def vjp(g):
        return (g,)

    return _from_op(out, "add", (a,), vjp)


def mul(a, b):
    a = _as_tensor(a)
    if isinstance(b, Tensor):
        if a.shape != b.shape:
            raise DimensionError(f"mul shapes disagree: {a.shape} vs {b.shape}")
        ad, bd = a.data, b.data
        out = ad * bd

        def vjp(g):
            return (
                g * bd if a.requires_grad else None,
                g * ad if b.requires_grad else None,
            )

        return _from_op(out, "mul", (a, b), vjp)
    return scale(a, float(b))


def scale(a, s):
    a = _as_tensor(a)
    s = float(s)
    out = a.data * s

    def vjp(g):
        return (g * s,)

    return _from_op(out, "scale", (a,), vjp)


def tanh(a):
    a = _as_tensor(a)
    y = kernels.tanh(a.data)

    def vjp(g):
        return (kernels.tanh_grad(y, np.ascontiguousarray(g)),)

    return _from_op(y, "tanh", (a,), vjp)


def sigmoid(a):
    a = _as_tensor(a)
    y = kernels.sigmoid(a.data)

    def vjp(g):
        return (kernels.sigmoid_grad(y, np.ascontiguousarray(g)),)

    return _from_op(y, "sigmoid", (a,), vjp)


def relu(a):
    a = _as_tensor(a)
    xd = a.data
    y = kernels.relu(xd)

    def vjp(g):
        return (kernels.relu_grad(xd, np.ascontiguousarray(g)),)

    return _from_op(y, "relu", (a,), vjp)


_ELEMENTWISE = {"add", "mul", "tanh", "sigmoid", "relu", "scale"}


def elementwise(kind, a, b=None):
    """Dispatch a pointwise op by name; binary kinds demand equal shapes."""
    if kind not in _ELEMENTWISE:
        raise ContractError(f"unknown elementwise kind {kind!r}")
    if kind in ("add", "mul", "scale"):
        if b is None:
            raise ContractError(f"elementwise {kind!r} needs a second operand")
        return {"add": add, "mul": mul, "scale": scale}[kind](a, b)
    if b is not None:
        raise ContractError(f"elementwise {kind!r} is unary")
    return {"tanh": tanh, "sigmoid": sigmoid, "relu": relu}[kind](a)


def add_rowvec(x, b):
    """Add a 1×n row vector to every row of an m×n tensor (explicit broadcast)."""
    x, b = _as_tensor(x), _as_tensor(b)
    _require_2d(x, "add_rowvec")
    if b.shape != (1, x.shape[1]):
        raise DimensionError(f"add_rowvec expects bias (1, {x.shape[1]}), got {b.shape}")
    out = x.data + b.data

    def vjp(g):
        return (g, g.sum(axis=0, keepdims=True))

    return _from_op(out, "add_rowvec", (x, b), vjp)


def tile_rows(x, m):
    """Repeat a 1×n row m times; the gradient sums back over the copies."""
    x = _as_tensor(x)
    if x.shape[0] != 1:
        raise DimensionError(f"tile_rows expects a single row, got {x.shape}")
    m = int(m)
    if m < 1:
        raise ContractError(f"tile_rows count must be >= 1, got {m}")
    out = np.repeat(x.data, m, axis=0)

    def vjp(g):
        return (g.sum(axis=0, keepdims=True),)

    return _from_op(out, "tile_rows", (x,), vjp)


def sum_all(x):
    """Total of every entry, as a 1×1 tensor."""
    x = _as_tensor(x)
    out = np.array([[x.data.sum()]], dtype=x.data.dtype)

    def vjp(g):
        return (np.full_like(x.data, g[0, 0]),)

    return _from_op(out, "sum_all", (x,), vjp)


def sum_over_rows(x):
    """Collapse m×n to 1×n column totals."""
    x = _as_tensor(x)
    _require_2d(x, "sum_over_rows")
    out = x.data.sum(axis=0, keepdims=True)
    m = x.shape[0]

    def vjp(g):
        return (np.repeat(g, m, axis=0),)

    return _from_op(out, "sum_over_rows", (x,), vjp)


def slice_rows(x, start, stop):
    """View rows [start, stop) as a new tensor; the gradient scatters back."""
    x = _as_tensor(x)
    _require_2d(x, "slice_rows")
    start, stop = int(start), int(stop)
    if not (0 <= start < stop <= x.shape[0]):
        raise ContractError(f"slice_rows [{start}, {stop}) out of range for {x.shape}")
    out = np.ascontiguousarray(x.data[start:stop])

    def vjp(g):
        full = np.zeros_like(x.data)
        full[start:stop] = g
        return (full,)

    return _from_op(out, "slice_rows", (x,), vjp)


def concat_rows(parts):
    """Stack 2-d tensors vertically; all must share the column count."""
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ContractError("concat_rows of nothing")
    for p in parts:
        _require_2d(p, "concat_rows")
    cols = parts[0].shape[1]
    for p in parts[1:]:
        if p.shape[1] != cols:
            raise DimensionError(f"concat_rows column mismatch: {p.shape[1]} vs {cols}")
    out = np.concatenate([p.data for p in parts], axis=0)
    counts = [p.shape[0] for p in parts]

    def vjp(g):
        pieces = []
        off = 0
        for n in counts:
            pieces.append(g[off:off + n])
            off += n
        return tuple(pieces)

    return _from_op(out, "concat_rows", tuple(parts), vjp)


def concat_cols(parts):
    """Join 2-d tensors side by side; all must share the row count."""
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ContractError("concat_cols of nothing")
    for p in parts:
        _require_2d(p, "concat_cols")
    rows = parts[0].shape[0]
    for p in parts[1:]:
        if p.shape[0] != rows:
            raise DimensionError(f"concat_cols row mismatch: {p.shape[0]} vs {rows}")
    out = np.concatenate([p.data for p in parts], axis=1)
    counts = [p.shape[1] for p in parts]

    def vjp(g):
        pieces = []
        off = 0
        for n in counts:
            pieces.append(np.ascontiguousarray(g[:, off:off + n]))
            off += n
        return tuple(pieces)

    return _from_op(out, "concat_cols", tuple(parts), vjp)


def cross_entropy_mean(logits, labels):
    """Mean of -log softmax(logits)[label] over the batch; stable via logsumexp."""
    logits = _as_tensor(logits)
    _require_2d(logits, "cross_entropy_mean")
    n, c = logits.shape
    idx = np.asarray(labels, dtype=np.int64).reshape(-1)
    if idx.shape[0] != n:
        raise ContractError(f"{idx.shape[0]} labels for {n} logit rows")
    if idx.size and (idx.min() < 0 or idx.max() >= c):
        raise ContractError(f"label out of range [0, {c}): {idx.tolist()}")
    z = logits.data
    mx = z.max(axis=1, keepdims=True)
    lse = mx[:, 0] + np.log(np.exp(z - mx).sum(axis=1))
    picked = z[np.arange(n), idx]
    loss = float((lse - picked).mean())
    out = np.array([[loss]], dtype=z.dtype)

    def vjp(g):
        p = kernels.softmax_rows(np.ascontiguousarray(z))
        p[np.arange(n), idx] -= 1.0
        p *= g[0, 0] / n
        return (p,)

    return _from_op(out, "cross_entropy_mean", (logits,), vjp)


# ---------------------------------------------------------------------------
# Graph and reverse pass
# ---------------------------------------------------------------------------

@dataclass
class GraphNode:
    id: int
    op: str
    input_ids: tuple
    tensor: Tensor


class Graph:
    """Topologically ordered record of the ops reachable from one root."""

    def __init__(self, nodes):
        self.nodes = nodes

    def __len__(self):
        return len(self.nodes)

    @classmethod
    def trace(cls, root):
        order = []
        seen = set()
        stack = [(root, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            for inp in t.inputs:
                if id(inp) not in seen:
                    stack.append((inp, False))
        pos = {id(t): i for i, t in enumerate(order)}
        nodes = [
            GraphNode(i, t.op, tuple(pos[id(p)] for p in t.inputs), t)
            for i, t in enumerate(order)
        ]
        return cls(nodes)


def backward(loss, graph=None):
    """Populate .grad for every requires_grad tensor reachable from loss.

    Flows are accumulated in a per-pass map and added into .grad at the end,
    so calling backward twice without zero_grad doubles parameter gradients
    (documented accumulation), never triples them.
    """
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        shape = getattr(loss, "shape", None)
        raise ContractError(f"backward needs a scalar loss tensor, got shape {shape}")
    g = graph if graph is not None else Graph.trace(loss)
    flows = {id(loss): np.ones_like(loss.data)}
    for node in reversed(g.nodes):
        t = node.tensor
        fg = flows.get(id(t))
        if fg is None or t._vjp is None:
            continue
        pieces = t._vjp(fg)
        for inp, pg in zip(t.inputs, pieces):
            if pg is None or not inp.requires_grad:
                continue
            held = flows.get(id(inp))
            # never mutate a stored flow in place: vjps may alias outputs
            flows[id(inp)] = pg if held is None else held + pg
    for node in g.nodes:
        t = node.tensor
        fg = flows.get(id(t))
        if t.requires_grad and fg is not None:
            t.grad = fg.copy() if t.grad is None else t.grad + fg
    return g


def zero_grad(tensors):
    for t in tensors:
        t.grad = np.zeros_like(t.data)
