"""Kernel backend selection.

The compiled extension (_ckernels, Cython) is preferred when built; the
pure-numpy backend (_pykernels) is the drop-in fallback. Set VEKIT_KERNELS=py
or VEKIT_KERNELS=c to force a backend; forcing the compiled one raises if the
extension is missing. Matrix products are delegated to numpy's BLAS in both
backends, so they are not part of this surface.
"""
import os

from . import _pykernels

_forced = os.environ.get("VEKIT_KERNELS", "").strip().lower()

if _forced in ("py", "python"):
    _impl = _pykernels
elif _forced in ("c", "compiled"):
    from . import _ckernels as _impl
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.BACKEND_NAME

softmax_rows = _impl.softmax_rows
softmax_rows_grad = _impl.softmax_rows_grad
sigmoid = _impl.sigmoid
sigmoid_grad = _impl.sigmoid_grad
tanh = _impl.tanh
tanh_grad = _impl.tanh_grad
relu = _impl.relu
relu_grad = _impl.relu_grad
adam_update = _impl.adam_update


def available_backends():
    """Return {name: module} for every importable backend (for benchmarks/tests)."""
    backends = {"python": _pykernels}
    try:
        from . import _ckernels

        backends["compiled"] = _ckernels
    except ImportError:
        pass
    return backends
