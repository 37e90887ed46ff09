"""Benchmark the compiled kernel backend against the pure-numpy fallback.

Shapes mirror the hot paths of a training step: attention-score softmax rows,
GRU gate nonlinearities, projection ReLUs, and Adam updates over parameter
blocks. Matrix products are BLAS in both backends and are timed once for
context only.

    python benchmarks/bench_kernels.py [--repeat 2000] [--dtype float64]
"""
import argparse
import timeit

import numpy as np

from vekit.numcore.kernels import available_backends

CASES = [
    ("softmax_rows 1x49 (grid attention)", "softmax_rows", (1, 49)),
    ("softmax_rows 56x56 (self-attention)", "softmax_rows", (56, 56)),
    ("softmax_rows 64x3 (batch logits)", "softmax_rows", (64, 3)),
    ("sigmoid 1x300 (GRU gate)", "sigmoid", (1, 300)),
    ("tanh 1x300 (GRU candidate)", "tanh", (1, 300)),
    ("relu 49x300 (region projection)", "relu", (49, 300)),
    ("softmax_rows_grad 56x56", "softmax_rows_grad", (56, 56)),
    ("tanh_grad 1x300", "tanh_grad", (1, 300)),
    ("adam_update 300x300 block", "adam_update", (300, 300)),
]


def bench_case(module, kind, shape, dtype, repeat):
    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.standard_normal(shape), dtype=dtype)
    g = np.ascontiguousarray(rng.standard_normal(shape), dtype=dtype)
    if kind in ("softmax_rows", "sigmoid", "tanh", "relu"):
        fn = getattr(module, kind)
        stmt = lambda: fn(x)
    elif kind == "softmax_rows_grad":
        y = module.softmax_rows(x)
        stmt = lambda: module.softmax_rows_grad(y, g)
    elif kind == "tanh_grad":
        y = module.tanh(x)
        stmt = lambda: module.tanh_grad(y, g)
    elif kind == "adam_update":
        p = x.copy().reshape(-1)
        grad = g.reshape(-1)
        m = np.zeros_like(p)
        v = np.zeros_like(p)
        step = [0]

        def stmt():
            step[0] += 1
            module.adam_update(p, grad, m, v, step[0], 1e-4, 0.9, 0.999, 1e-8)
    else:
        raise ValueError(kind)
    return timeit.timeit(stmt, number=repeat) / repeat * 1e6  # microseconds


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=2000)
    parser.add_argument("--dtype", choices=("float32", "float64"), default="float64")
    args = parser.parse_args()
    dtype = np.dtype(args.dtype)

    backends = available_backends()
    names = list(backends)
    print(f"backends: {', '.join(names)}   dtype: {args.dtype}   repeat: {args.repeat}")
    header = f"{'case':40s}" + "".join(f"{n:>12s}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    print("-" * len(header))
    for label, kind, shape in CASES:
        times = [bench_case(backends[n], kind, shape, dtype, args.repeat) for n in names]
        row = f"{label:40s}" + "".join(f"{t:10.2f}us" for t in times)
        if len(times) == 2 and times[1] > 0:
            row += f"{times[0] / times[1]:9.2f}x"
        print(row)

    # context: the matmul both backends delegate to BLAS
    rng = np.random.default_rng(0)
    a = np.ascontiguousarray(rng.standard_normal((300, 300)), dtype=dtype)
    b = np.ascontiguousarray(rng.standard_normal((300, 300)), dtype=dtype)
    t = timeit.timeit(lambda: a @ b, number=max(args.repeat // 10, 1)) / max(args.repeat // 10, 1) * 1e6
    print(f"\n(matmul 300x300, BLAS via numpy in both backends: {t:.2f}us)")


if __name__ == "__main__":
    main()
