"""Dual-branch bilateral convolutional backbone.

Each of the three levels runs a plain ConvBlock and a BilateralConvBlock on
the same input. Both blocks are three 3x3 conv + ReLU layers with their own
weights; the bilateral block additionally passes its input (or, with
``dbo_position="output"``, its output) through the deep bilateral operator.
The two outputs are summed and max-pooled, so a 256x256 input yields level
features at 128, 64 and 32 pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import ops
from .bilateral import dbo, dbo_full
from .tensor import ShapeError, Tensor

N_CONVS = 3


@dataclass
class LevelFeatures:
    low: Tensor
    mid: Tensor
    high: Tensor


def _apply_dbo(x, cfg):
    if cfg.bilateral == "identity":
        return x
    return dbo_full(x, cfg.dbo) if cfg.dbo.use_spatial else dbo(x, cfg.dbo)


def conv_block(x, params, prefix):
    for i in range(N_CONVS):
        x = ops.relu(ops.conv2d(x, params[f"{prefix}.{i}.w"], params[f"{prefix}.{i}.b"]))
    return x


def bilateral_conv_block(x, params, prefix, cfg):
    if cfg.dbo_position == "input":
        return conv_block(_apply_dbo(x, cfg), params, prefix)
    return _apply_dbo(conv_block(x, params, prefix), cfg)


def bcn_level(x, params, level, cfg):
    residual = conv_block(x, params, f"bcn.level{level}.conv")
    base = bilateral_conv_block(x, params, f"bcn.level{level}.bconv", cfg)
    return ops.maxpool2(ops.add(residual, base))


def bcn_forward(image, params, cfg):
    """Stem conv then three levels; returns the pooled output of each level."""
    expected = (cfg.in_channels, cfg.input_size, cfg.input_size)
    if image.ndim != 4 or image.shape[1:] != expected:
        raise ShapeError(f"BCN expects input (N, {expected[0]}, {expected[1]}, {expected[2]}), got {image.shape}")
    x = ops.relu(ops.conv2d(image, params["bcn.stem.w"], params["bcn.stem.b"]))
    outs = []
    for level in range(1, 4):
        x = bcn_level(x, params, level, cfg)
        outs.append(x)
    return LevelFeatures(*outs)
