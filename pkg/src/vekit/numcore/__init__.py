"""Minimal differentiable numerics: tensors, recorded ops, reverse mode."""
from .config import get_dtype, precision, set_dtype
from .gradcheck import GradCheckReport, finite_diff_check
from .kernels import BACKEND, available_backends
from .tensor import (
    Graph,
    GraphNode,
    Tensor,
    add,
    add_rowvec,
    backward,
    concat_cols,
    concat_rows,
    cross_entropy_mean,
    elementwise,
    matmul,
    mul,
    relu,
    scale,
    sigmoid,
    slice_rows,
    softmax_rows,
    sum_all,
    sum_over_rows,
    tanh,
    tensor,
    tile_rows,
    transpose,
    zero_grad,
)

__all__ = [
    "BACKEND",
    "GradCheckReport",
    "Graph",
    "GraphNode",
    "Tensor",
    "add",
    "add_rowvec",
    "available_backends",
    "backward",
    "concat_cols",
    "concat_rows",
    "cross_entropy_mean",
    "elementwise",
    "finite_diff_check",
    "get_dtype",
    "matmul",
    "mul",
    "precision",
    "relu",
    "scale",
    "set_dtype",
    "sigmoid",
    "slice_rows",
    "softmax_rows",
    "sum_all",
    "sum_over_rows",
    "tanh",
    "tensor",
    "tile_rows",
    "transpose",
    "zero_grad",
]
