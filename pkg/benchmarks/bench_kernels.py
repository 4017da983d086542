"""Throughput comparison of the compiled and numpy kernel backends.

Run: python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from motionweave.kernels import _numpy_impl

try:
    from motionweave.kernels import _ckernels
except ImportError:
    _ckernels = None

SHAPES = {
    "softmax attn (B*H*L, L)": (7936, 65),
    "softmax small": (512, 24),
    "layernorm tokens": (3968, 64),
}


def bench(fn, *args, repeats=40):
    fn(*args)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats * 1000


def run(dtype):
    rng = np.random.default_rng(0)
    tag = np.dtype(dtype).name
    print(f"\n== {tag} ==")
    header = f"{'kernel':34s} {'numpy ms':>9s} {'compiled ms':>12s} {'speedup':>8s}"
    print(header)
    rows = []
    for label, shape in SHAPES.items():
        x = np.ascontiguousarray(rng.standard_normal(shape).astype(dtype))
        mask = (rng.random(shape) > 0.2).astype(np.uint8)
        mask[:, 0] = 1
        if "softmax" in label:
            y = _numpy_impl.softmax_fwd(x, mask)
            rows.append((f"{label} fwd",
                         bench(_numpy_impl.softmax_fwd, x, mask),
                         bench(_ckernels.softmax_fwd, x, mask) if _ckernels else None))
            rows.append((f"{label} bwd",
                         bench(_numpy_impl.softmax_bwd, y, y),
                         bench(_ckernels.softmax_bwd, y, y) if _ckernels else None))
        else:
            gamma = np.ones(shape[1], dtype=dtype)
            beta = np.zeros(shape[1], dtype=dtype)
            _, mu, rstd = _numpy_impl.layernorm_fwd(x, gamma, beta, 1e-5)
            mu = mu.astype(dtype)
            rstd = rstd.astype(dtype)
            rows.append((f"{label} fwd",
                         bench(_numpy_impl.layernorm_fwd, x, gamma, beta, 1e-5),
                         bench(_ckernels.layernorm_fwd, x, gamma, beta, 1e-5) if _ckernels else None))
            rows.append((f"{label} bwd",
                         bench(_numpy_impl.layernorm_bwd, x, gamma, mu, rstd, x),
                         bench(_ckernels.layernorm_bwd, x, gamma, mu, rstd, x) if _ckernels else None))
    for label, t_np, t_c in rows:
        if t_c is None:
            print(f"{label:34s} {t_np:9.3f} {'n/a':>12s}")
        else:
            print(f"{label:34s} {t_np:9.3f} {t_c:12.3f} {t_np / t_c:7.2f}x")


if __name__ == "__main__":
    if _ckernels is None:
        print("compiled extension not built; showing numpy backend only")
    for dtype in (np.float32, np.float64):
        run(dtype)
    print("\nGELU is numpy-vectorized in both backends (SIMD transcendentals"
          "\nbeat scalar loops; see kernels/__init__.py).")
