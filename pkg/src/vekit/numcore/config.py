"""Build-wide floating point precision.

Gradient checks are unreliable in single precision, so tests and
finite-difference verification run in float64; training may switch the whole
stack to float32. Tensors snapshot the active dtype at creation time.
"""
from contextlib import contextmanager

import numpy as np

_SUPPORTED = (np.float32, np.float64)
_dtype = np.float64


def get_dtype():
    return _dtype


def set_dtype(dtype):
    global _dtype
    dtype = np.dtype(dtype).type
    if dtype not in _SUPPORTED:
        raise ValueError(f"unsupported dtype {dtype!r}; use float32 or float64")
    _dtype = dtype


@contextmanager
def precision(dtype):
    """Temporarily switch the active dtype (restores the previous one on exit)."""
    previous = _dtype
    set_dtype(dtype)
    try:
        yield
    finally:
        set_dtype(previous)
