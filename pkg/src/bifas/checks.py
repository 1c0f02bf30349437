"""Built-in gradient checks, one per differentiable operation.

Each entry builds a small seeded problem and returns the max relative error
reported by :func:`bifas.gradcheck.gradcheck`. The ``gradcheck`` CLI
subcommand and the acceptance suite both run this registry.
"""

from __future__ import annotations

import numpy as np

from . import model, ops
from .bilateral import DboParams, dbo, dbo_full
from .config import tiny_model_config
from .gradcheck import gradcheck
from .mfrm import kernel_normalize, refine
from .supervision import compute_losses, loss_depth, loss_patch, loss_reflection
from .tensor import Tensor

TOLERANCE = 1e-3


def _t(a):
    return Tensor(np.asarray(a, dtype=np.float64), dtype=np.float64)


def _probe(rng, shape):
    """Random linear functional, so every output element contributes."""
    p = rng.normal(size=shape)
    return lambda y: ops.sum(ops.mul(y, p))


def _unary(op, shape, seed=0, spread=1.0):
    rng = np.random.default_rng(seed)
    x = _t(rng.normal(size=shape) * spread)
    f = _probe(rng, op(x).shape)
    return gradcheck(lambda t: f(op(t)), x)


def check_add():
    rng = np.random.default_rng(0)
    a, b = _t(rng.normal(size=(2, 3, 4))), _t(rng.normal(size=(3, 1)))
    f = _probe(rng, (2, 3, 4))
    return gradcheck(lambda x, y: f(ops.add(x, y)), [a, b])


def check_sub():
    rng = np.random.default_rng(1)
    a, b = _t(rng.normal(size=(3, 4))), _t(rng.normal(size=(4,)))
    f = _probe(rng, (3, 4))
    return gradcheck(lambda x, y: f(ops.sub(x, y)), [a, b])


def check_mul():
    rng = np.random.default_rng(2)
    a, b = _t(rng.normal(size=(2, 3, 4))), _t(rng.normal(size=(1, 3, 4)))
    f = _probe(rng, (2, 3, 4))
    return gradcheck(lambda x, y: f(ops.mul(x, y)), [a, b])


def check_mean():
    return gradcheck(lambda t: ops.mean(ops.mul(t, t)), _t(np.random.default_rng(3).normal(size=(3, 5))))


def check_reshape():
    return _unary(lambda t: ops.reshape(t, (6, 4)), (2, 3, 4))


def check_relu():
    # keep inputs away from the kink at zero
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 3, 4, 4))
    x = np.where(np.abs(x) < 0.05, 0.5, x)
    f = _probe(rng, x.shape)
    return gradcheck(lambda t: f(ops.relu(t)), _t(x))


def check_sigmoid():
    return _unary(ops.sigmoid, (2, 3, 4, 4), spread=3.0)


def check_softmax():
    return _unary(ops.softmax_channel, (2, 5, 3, 3), spread=2.0)


def check_concat():
    rng = np.random.default_rng(5)
    a, b = _t(rng.normal(size=(1, 2, 3, 3))), _t(rng.normal(size=(1, 3, 3, 3)))
    f = _probe(rng, (1, 5, 3, 3))
    return gradcheck(lambda x, y: f(ops.concat_channels([x, y])), [a, b])


def check_conv2d():
    rng = np.random.default_rng(6)
    x = _t(rng.normal(size=(2, 3, 5, 5)))
    w = _t(rng.normal(size=(4, 3, 3, 3)))
    b = _t(rng.normal(size=4))
    f = _probe(rng, (2, 4, 5, 5))
    return gradcheck(lambda x_, w_, b_: f(ops.conv2d(x_, w_, b_)), [x, w, b])


def check_conv2d_1x1():
    rng = np.random.default_rng(7)
    x = _t(rng.normal(size=(2, 5, 4, 4)))
    w = _t(rng.normal(size=(3, 5, 1, 1)))
    b = _t(rng.normal(size=3))
    f = _probe(rng, (2, 3, 4, 4))
    return gradcheck(lambda x_, w_, b_: f(ops.conv2d(x_, w_, b_)), [x, w, b])


def check_maxpool2():
    # distinct values so the argmax is stable under the finite-difference step
    rng = np.random.default_rng(8)
    x = rng.permutation(2 * 3 * 6 * 6).reshape(2, 3, 6, 6) * 0.01
    f = _probe(rng, (2, 3, 3, 3))
    return gradcheck(lambda t: f(ops.maxpool2(t)), _t(x))


def check_avgpool():
    return _unary(lambda t: ops.avgpool(t, 2), (2, 3, 6, 6))


def check_dbo():
    return _unary(lambda t: dbo(t, DboParams()), (2, 2, 5, 5))


def check_dbo_full():
    return _unary(lambda t: dbo_full(t, DboParams(use_spatial=True, sigma_s=1.2)), (2, 2, 5, 5))


def check_refine():
    rng = np.random.default_rng(9)
    feats = _t(rng.normal(size=(2, 3, 5, 5)))
    logits = _t(rng.normal(size=(2, 9, 5, 5)))
    f = _probe(rng, (2, 3, 5, 5))
    return gradcheck(lambda x, l: f(refine(x, kernel_normalize(l), 3)), [feats, logits])


def check_losses():
    rng = np.random.default_rng(10)
    d = _t(rng.uniform(0.05, 0.95, size=(1, 1, 4, 4)))
    r = _t(rng.uniform(0.05, 0.95, size=(1, 3, 4, 4)))
    p = _t(rng.uniform(0.05, 0.95, size=(1, 1, 4, 4)))
    dg, rg = rng.random((1, 1, 4, 4)), rng.random((1, 3, 4, 4))
    pg = np.ones((1, 1, 4, 4))
    return max(
        gradcheck(lambda t: loss_depth(t, dg), d),
        gradcheck(lambda t: loss_reflection(t, rg), r),
        gradcheck(lambda t: loss_patch(t, pg), p),
    )


def check_model():
    """End to end through the tiny network, on a sample of coordinates per tensor."""
    cfg = tiny_model_config(input_size=32, width=8)
    params = model.init_params(cfg, seed=1)
    rng = np.random.default_rng(0)
    images = rng.random((1, 3, 32, 32))
    depth, refl, patch = rng.random((1, 1, 4, 4)), np.zeros((1, 3, 4, 4)), np.ones((1, 1, 4, 4))
    names = sorted(params)

    def loss(*tensors):
        out = model.forward(dict(zip(names, tensors)), cfg, Tensor(images))
        return compute_losses(out, depth, refl, patch)[0]

    return gradcheck(loss, [params[k] for k in names], max_coords=6, seed=0)


CHECKS = {
    "add": check_add,
    "sub": check_sub,
    "mul": check_mul,
    "mean": check_mean,
    "reshape": check_reshape,
    "relu": check_relu,
    "sigmoid": check_sigmoid,
    "softmax": check_softmax,
    "concat": check_concat,
    "conv2d": check_conv2d,
    "conv2d_1x1": check_conv2d_1x1,
    "maxpool2": check_maxpool2,
    "avgpool": check_avgpool,
    "dbo": check_dbo,
    "dbo_full": check_dbo_full,
    "refine": check_refine,
    "losses": check_losses,
    "model": check_model,
}


def run_checks(names=None):
    """Return ``{name: max relative error}`` for the selected checks (all by default)."""
    names = list(CHECKS) if names is None else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown check(s) {unknown}; available: {sorted(CHECKS)}")
    return {n: CHECKS[n]() for n in names}
