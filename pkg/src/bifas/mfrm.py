"""Multi-level feature refinement by content-aware reassembly.

For each level the features are compressed with a 1x1 conv, a 5x5 conv
encodes K*K logits per location, a channel softmax turns them into a
refinement kernel, and every location is rebuilt as the kernel-weighted sum
of its zero-padded K x K neighbourhood. The same kernel applies to all
channels at a location. Refined low and mid levels are average-pooled down to
the high-level resolution and the three are concatenated along channels.
"""

from __future__ import annotations

from . import kernels, ops
from .tensor import ShapeError, Tensor

LEVELS = ("low", "mid", "high")


def channel_compress(f, params, prefix):
    w = params[f"{prefix}.compress.w"]
    if f.shape[1] < w.shape[0]:
        raise ShapeError(f"cannot compress {f.shape[1]} channels to {w.shape[0]}")
    return ops.conv2d(f, w, params[f"{prefix}.compress.b"])


def content_encode(compressed, params, prefix):
    return ops.conv2d(compressed, params[f"{prefix}.encode.w"], params[f"{prefix}.encode.b"])


def kernel_normalize(logits):
    return ops.softmax_channel(logits)


def refine(f, kernels_, k):
    """Reassemble ``f`` (N, C, H, W) with per-location kernels (N, K*K, H, W)."""
    if k % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {k}")
    n, c, h, w = f.shape
    if kernels_.shape != (n, k * k, h, w):
        raise ShapeError(f"kernels {kernels_.shape} not aligned with features {f.shape} for K={k}")
    out = kernels.refine_forward(f.data, kernels_.data, k)

    def backward(g):
        return kernels.refine_backward(f.data, kernels_.data, g, k)

    return Tensor._from_op(out, (f, kernels_), backward)


def refine_level(f, params, prefix, k):
    logits = content_encode(channel_compress(f, params, prefix), params, prefix)
    return refine(f, kernel_normalize(logits), k)


def mfrm_forward(levels, params, cfg):
    """Refine low/mid/high independently and fuse them at the high-level resolution."""
    target = levels.high.shape[2]
    fused = []
    for name in LEVELS:
        f = getattr(levels, name)
        refined = refine_level(f, params, f"mfrm.{name}", cfg.kernel_size)
        fused.append(ops.avgpool(refined, f.shape[2] // target))
    return ops.concat_channels(fused)
