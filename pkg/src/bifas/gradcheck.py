"""Central-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, double_precision, no_grad


def gradcheck(fn, inputs, eps=1e-5, max_coords=None, seed=0):
    """Max relative error between backprop and central differences.

    ``fn`` is called as ``fn(*inputs)`` and must return a scalar tensor. Each
    input is copied to float64 and the whole graph runs in double precision.
    The error per coordinate is ``|a - n| / max(1e-8, |a| + |n|)``.

    ``max_coords`` limits the number of coordinates probed per input (chosen
    with ``seed``); ``None`` probes all of them. ``fn`` must be deterministic,
    otherwise the result is meaningless.
    """
    single = isinstance(inputs, Tensor)
    inputs = [inputs] if single else list(inputs)
    rng = np.random.default_rng(seed)
    worst = 0.0
    with double_precision():
        xs = [Tensor(t.data.astype(np.float64), requires_grad=True) for t in inputs]
        out = fn(*xs)
        if out.data.size != 1:
            raise ValueError(f"gradcheck needs a scalar-valued fn, got shape {out.shape}")
        out.backward()
        analytic = [x.grad if x.grad is not None else np.zeros_like(x.data) for x in xs]

        with no_grad():
            for x, a in zip(xs, analytic):
                flat = x.data.reshape(-1)
                afl = a.reshape(-1)
                idx = np.arange(flat.size)
                if max_coords is not None and flat.size > max_coords:
                    idx = rng.choice(flat.size, size=max_coords, replace=False)
                for i in idx:
                    orig = flat[i]
                    flat[i] = orig + eps
                    fp = fn(*xs).item()
                    flat[i] = orig - eps
                    fm = fn(*xs).item()
                    flat[i] = orig
                    num = (fp - fm) / (2 * eps)
                    err = abs(afl[i] - num) / max(1e-8, abs(afl[i]) + abs(num))
                    worst = max(worst, err)
    return worst
