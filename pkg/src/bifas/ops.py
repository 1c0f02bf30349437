"""Differentiable operators on :class:`~bifas.tensor.Tensor`.

Only the operator set the model needs: elementwise arithmetic with
broadcasting, reductions, same-padded convolution, 2x2 max pooling, average
pooling, channel concatenation and the usual nonlinearities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels
from .tensor import ShapeError, Tensor, as_tensor


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return Tensor._from_op(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return Tensor._from_op(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return Tensor._from_op(
        ad * bd, (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def sum(x):  # noqa: A001 - mirrors numpy naming
    shape = x.shape
    return Tensor._from_op(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(x):
    shape, n = x.shape, x.data.size
    return Tensor._from_op(
        np.asarray(x.data.mean()), (x,),
        lambda g: (np.broadcast_to(g / n, shape).astype(x.dtype),))


def reshape(x, shape):
    old = x.shape
    return Tensor._from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def relu(x):
    mask = x.data > 0
    return Tensor._from_op(x.data * mask, (x,), lambda g: (g * mask,))


def sigmoid(x):
    # split by sign so exp never overflows
    d = x.data
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1 / (1 + e), e / (1 + e)).astype(d.dtype)
    return Tensor._from_op(y, (x,), lambda g: (g * y * (1 - y),))


def softmax_channel(x):
    """Softmax over axis 1 (channels), independently at each spatial location."""
    d = x.data
    e = np.exp(d - d.max(axis=1, keepdims=True))
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return Tensor._from_op(y, (x,), backward)


def concat_channels(xs):
    xs = list(xs)
    sizes = [x.shape[1] for x in xs]
    if len({(x.shape[0],) + x.shape[2:] for x in xs}) != 1:
        raise ShapeError(f"concat needs equal N/H/W, got {[x.shape for x in xs]}")
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(xs)))

    return Tensor._from_op(np.concatenate([x.data for x in xs], axis=1), xs, backward)


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int = 3
    stride: int = 1

    def __post_init__(self):
        if self.kernel % 2 != 1:
            raise ValueError(f"kernel must be odd, got {self.kernel}")
        if self.stride != 1:
            raise ValueError("only stride 1 is supported")

    @property
    def padding(self):
        return self.kernel // 2

    @property
    def weight_shape(self):
        return (self.out_channels, self.in_channels, self.kernel, self.kernel)


def _im2col(xp, k, h, w):
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # N,C,H,W,k,k
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * k * k, h * w)


def conv2d(x, weight, bias=None, spec=None):
    """Zero-padded 'same' convolution, stride 1 (cross-correlation, NCHW/OIHW)."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    o, c, k, k2 = weight.shape
    if spec is not None and tuple(spec.weight_shape) != weight.shape:
        raise ShapeError(f"weight shape {weight.shape} does not match {spec}")
    if k != k2 or k % 2 != 1:
        raise ShapeError(f"conv2d needs a square odd kernel, got {k}x{k2}")
    if x.shape[1] != c:
        raise ShapeError(f"input has {x.shape[1]} channels, weight expects {c}")
    if bias is not None and bias.shape != (o,):
        raise ShapeError(f"bias shape {bias.shape} != ({o},)")

    n, _, h, w = x.shape
    p = k // 2
    w2 = weight.data.reshape(o, c * k * k)
    if k == 1:
        cols = x.data.reshape(n, c, h * w)
    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))
        cols = _im2col(xp, k, h, w)
    out = np.matmul(w2, cols)
    if bias is not None:
        out += bias.data[None, :, None]
    out = out.reshape(n, o, h, w)

    def backward(g):
        g2 = g.reshape(n, o, h * w)
        gw = np.tensordot(g2, cols, axes=([0, 2], [0, 2])).reshape(weight.shape)
        gb = g2.sum(axis=(0, 2)) if bias is not None else None
        gcols = np.matmul(w2.T, g2)
        if k == 1:
            gx = gcols.reshape(n, c, h, w)
        else:
            gcols = gcols.reshape(n, c, k, k, h, w)
            gxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=g.dtype)
            for a in range(k):
                for b in range(k):
                    gxp[:, :, a:a + h, b:b + w] += gcols[:, :, a, b]
            gx = gxp[:, :, p:p + h, p:p + w]
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, backward)


def maxpool2(x):
    """2x2 non-overlapping max pool; gradient goes to the first maximum in scan order."""
    if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"maxpool2 needs NCHW with even H and W, got {x.shape}")
    out, arg = kernels.maxpool2_forward(x.data)
    return Tensor._from_op(out, (x,), lambda g: (kernels.maxpool2_backward(g, arg),))


def avgpool(x, factor):
    if factor == 1:
        return x
    n, c, h, w = x.shape
    if h % factor or w % factor:
        raise ShapeError(f"avgpool factor {factor} does not divide {h}x{w}")
    out = x.data.reshape(n, c, h // factor, factor, w // factor, factor).mean(axis=(3, 5))

    def backward(g):
        up = np.repeat(np.repeat(g, factor, axis=2), factor, axis=3)
        return (up / (factor * factor),)

    return Tensor._from_op(out.astype(x.dtype), (x,), backward)
