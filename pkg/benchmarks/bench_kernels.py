"""Compare the numba and pure-numpy kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--quick]

Each kernel runs on a feature-map shape typical of the network (the level-1
map of the tiny config, and one level-3 map of the full model). The numba
functions are compiled before timing.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from bifas import kernels


def cases(quick):
    shapes = [("tiny level1", (7, 8, 64, 64)), ("full level3", (1, 128, 64, 64))]
    if quick:
        shapes = shapes[:1]
    rng = np.random.default_rng(0)
    for label, shape in shapes:
        x = rng.normal(size=shape).astype(np.float32)
        g = rng.normal(size=shape).astype(np.float32)
        n, c, h, w = shape
        wk = rng.random((n, 25, h, w)).astype(np.float32)
        wk /= wk.sum(axis=1, keepdims=True)
        out = kernels.numpy_impl.bilateral_forward(x, 1.0, 3, 0.0)
        pooled, arg = kernels.numpy_impl.maxpool2_forward(x)
        gp = rng.normal(size=pooled.shape).astype(np.float32)
        yield label, "bilateral_forward", lambda m: m.bilateral_forward(x, 1.0, 3, 0.0)
        yield label, "bilateral_backward", lambda m: m.bilateral_backward(x, out, g, 1.0, 3, 0.0)
        yield label, "refine_forward", lambda m: m.refine_forward(x, wk, 5)
        yield label, "refine_backward", lambda m: m.refine_backward(x, wk, g, 5)
        yield label, "maxpool2_forward", lambda m: m.maxpool2_forward(x)
        yield label, "maxpool2_backward", lambda m: m.maxpool2_backward(gp, arg)


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="small shapes only")
    args = ap.parse_args()
    if kernels.numba_impl is None:
        raise SystemExit("numba is not importable; nothing to compare")
    print(f"{'shape':12s} {'kernel':20s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for label, name, call in cases(args.quick):
        call(kernels.numba_impl)  # compile / warm the cache
        t_np = best_of(lambda: call(kernels.numpy_impl), args.repeat)
        t_nb = best_of(lambda: call(kernels.numba_impl), args.repeat)
        print(f"{label:12s} {name:20s} {t_np * 1e3:10.2f} {t_nb * 1e3:10.2f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
