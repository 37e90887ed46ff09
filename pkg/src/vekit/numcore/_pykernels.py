"""Numpy reference implementation of the hot kernels.

This is the fallback backend used when the compiled extension is not built.
Both backends expose the same surface and must agree numerically; the
equivalence is pinned by tests and measured by benchmarks/bench_kernels.py.
All inputs are C-contiguous float32 or float64 arrays.
"""
import numpy as np

BACKEND_NAME = "python"


def softmax_rows(x):
    # per-row max subtraction keeps exp() in range for any finite input
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_grad(y, gy):
    # dX[i] = (dY[i] - (dY[i] . Y[i])) * Y[i]
    dot = (gy * y).sum(axis=1, keepdims=True)
    return (gy - dot) * y


def sigmoid(x):
    out = np.empty_like(x)
    np.negative(x, out=out)
    np.exp(out, out=out)
    out += 1.0
    np.reciprocal(out, out=out)
    return out


def sigmoid_grad(y, gy):
    return gy * y * (1.0 - y)


def tanh(x):
    return np.tanh(x)


def tanh_grad(y, gy):
    return gy * (1.0 - y * y)


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(x, gy):
    return np.where(x > 0.0, gy, 0.0)


def adam_update(p, g, m, v, step, lr, beta1, beta2, eps):
    """One bias-corrected Adam step, in place on p, m and v."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    p -= lr * m_hat / (np.sqrt(v_hat) + eps)
