"""Central-difference verification of recorded gradients.

The check is the project's independent oracle for every differentiable
operation and every full model graph: analytic gradients from ``backward``
are compared per coordinate against (f(p+eps) - f(p-eps)) / (2 eps).
Run it in float64; float32 rounding swamps the differences.
"""
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from .tensor import Tensor, backward, zero_grad


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_param: int
    worst_coord: tuple
    analytic: float
    numeric: float
    n_coords: int

    def ok(self, tol):
        return self.max_rel_err <= tol

    def __str__(self):
        return (
            f"max rel err {self.max_rel_err:.3e} over {self.n_coords} coords "
            f"(param {self.worst_param}, coord {self.worst_coord}: "
            f"analytic {self.analytic:.6e} vs numeric {self.numeric:.6e})"
        )


def finite_diff_check(f, params, eps=1e-5):
    """Compare backward() gradients of a scalar-valued f against central differences.

    ``f`` is called as ``f(params)`` and must be deterministic — seed any RNG
    before building the loss. ``params`` are the tensors to perturb; they must
    have requires_grad set. Relative error uses max(|analytic|, |numeric|, 1e-8)
    as the denominator.
    """
    if eps <= 0:
        raise ContractError(f"finite_diff_check eps must be > 0, got {eps}")
    params = list(params)
    for i, p in enumerate(params):
        if not isinstance(p, Tensor) or not p.requires_grad:
            raise ContractError(f"param {i} is not a requires_grad tensor")

    zero_grad(params)
    loss = f(params)
    backward(loss)
    analytic = [p.grad.copy() for p in params]

    worst = GradCheckReport(0.0, -1, (), 0.0, 0.0, 0)
    n_coords = 0
    for pi, p in enumerate(params):
        flat = p.data.reshape(-1)
        aflat = analytic[pi].reshape(-1)
        for ci in range(flat.shape[0]):
            orig = flat[ci]
            flat[ci] = orig + eps
            lo_hi = f(params).item()
            flat[ci] = orig - eps
            lo_lo = f(params).item()
            flat[ci] = orig
            numeric = (lo_hi - lo_lo) / (2.0 * eps)
            a = float(aflat[ci])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            n_coords += 1
            if rel > worst.max_rel_err:
                coord = np.unravel_index(ci, p.data.shape)
                worst = GradCheckReport(rel, pi, tuple(int(c) for c in coord), a, numeric, 0)
    worst.n_coords = n_coords
    return worst
