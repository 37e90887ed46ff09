# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend.

Single-pass C loops over contiguous float32/float64 arrays. The pure-numpy
backend (_pykernels) implements the identical surface; dispatch happens in
vekit.numcore.kernels at import time.
"""
import numpy as np

from libc.math cimport exp as c_exp, tanh as c_tanh, sqrt as c_sqrt, pow as c_pow

BACKEND_NAME = "compiled"

ctypedef fused real:
    float
    double


cdef inline object _empty2(Py_ssize_t n, Py_ssize_t m, bint is_double):
    if is_double:
        return np.empty((n, m), dtype=np.float64)
    return np.empty((n, m), dtype=np.float32)


def softmax_rows(real[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = x.shape[1]
    cdef Py_ssize_t i, j
    out_arr = _empty2(n, m, real is double)
    cdef real[:, ::1] out = out_arr
    cdef real mx, s
    for i in range(n):
        mx = x[i, 0]
        for j in range(1, m):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0
        for j in range(m):
            out[i, j] = <real> c_exp(x[i, j] - mx)
            s += out[i, j]
        for j in range(m):
            out[i, j] /= s
    return out_arr


def softmax_rows_grad(real[:, ::1] y, real[:, ::1] gy):
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t m = y.shape[1]
    cdef Py_ssize_t i, j
    out_arr = _empty2(n, m, real is double)
    cdef real[:, ::1] out = out_arr
    cdef real dot
    for i in range(n):
        dot = 0
        for j in range(m):
            dot += gy[i, j] * y[i, j]
        for j in range(m):
            out[i, j] = (gy[i, j] - dot) * y[i, j]
    return out_arr


def sigmoid(real[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = x.shape[1]
    cdef Py_ssize_t i, j
    out_arr = _empty2(n, m, real is double)
    cdef real[:, ::1] out = out_arr
    for i in range(n):
        for j in range(m):
            out[i, j] = <real> (1.0 / (1.0 + c_exp(-x[i, j])))
    return out_arr


def sigmoid_grad(real[:, ::1] y, real[:, ::1] gy):
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t m = y.shape[1]
    cdef Py_ssize_t i, j
    out_arr = _empty2(n, m, real is double)
    cdef real[:, ::1] out = out_arr
    for i in range(n):
        for j in range(m):
            out[i, j] = gy[i, j] * y[i, j] * (1 - y[i, j])
    return out_arr


def tanh(real[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = x.shape[1]
    cdef Py_ssize_t i, j
    out_arr = _empty2(n, m, real is double)
    cdef real[:, ::1] out = out_arr
    for i in range(n):
        for j in range(m):
            out[i, j] = <real> c_tanh(x[i, j])
    return out_arr


def tanh_grad(real[:, ::1] y, real[:, ::1] gy):
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t m = y.shape[1]
    cdef Py_ssize_t i, j
    out_arr = _empty2(n, m, real is double)
    cdef real[:, ::1] out = out_arr
    for i in range(n):
        for j in range(m):
            out[i, j] = gy[i, j] * (1 - y[i, j] * y[i, j])
    return out_arr


def relu(real[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = x.shape[1]
    cdef Py_ssize_t i, j
    out_arr = _empty2(n, m, real is double)
    cdef real[:, ::1] out = out_arr
    for i in range(n):
        for j in range(m):
            out[i, j] = x[i, j] if x[i, j] > 0 else 0
    return out_arr


def relu_grad(real[:, ::1] x, real[:, ::1] gy):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = x.shape[1]
    cdef Py_ssize_t i, j
    out_arr = _empty2(n, m, real is double)
    cdef real[:, ::1] out = out_arr
    for i in range(n):
        for j in range(m):
            out[i, j] = gy[i, j] if x[i, j] > 0 else 0
    return out_arr


def adam_update(real[::1] p, real[::1] g, real[::1] m, real[::1] v,
                long step, double lr, double beta1, double beta2, double eps):
    """One bias-corrected Adam step, in place on p, m and v (flat views)."""
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i
    cdef double c1 = 1.0 - c_pow(beta1, step)
    cdef double c2 = 1.0 - c_pow(beta2, step)
    cdef double m_hat, v_hat
    for i in range(n):
        m[i] = <real> (beta1 * m[i] + (1.0 - beta1) * g[i])
        v[i] = <real> (beta2 * v[i] + (1.0 - beta2) * g[i] * g[i])
        m_hat = m[i] / c1
        v_hat = v[i] / c2
        p[i] -= <real> (lr * m_hat / (c_sqrt(v_hat) + eps))
