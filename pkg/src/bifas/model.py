"""Parameter layout, initialisation and the full image -> heads forward pass."""

from __future__ import annotations

import math

import numpy as np

from .bcn import bcn_forward
from .mfrm import LEVELS, mfrm_forward
from .supervision import heads_forward
from .tensor import Tensor


def param_shapes(cfg):
    """Ordered mapping of parameter name -> shape for a :class:`ModelConfig`."""
    b, m, h = cfg.bcn, cfg.mfrm, cfg.heads
    shapes = {}

    def conv(name, cin, cout, k):
        shapes[f"{name}.w"] = (cout, cin, k, k)
        shapes[f"{name}.b"] = (cout,)

    conv("bcn.stem", b.in_channels, b.stem_channels, 3)
    cin = b.stem_channels
    level_out = []
    for lv, widths in enumerate(b.level_channels, start=1):
        for branch in ("conv", "bconv"):
            c = cin
            for i, cout in enumerate(widths):
                conv(f"bcn.level{lv}.{branch}.{i}", c, cout, 3)
                c = cout
        cin = widths[-1]
        level_out.append(cin)

    kk = m.kernel_size * m.kernel_size
    for name, c in zip(LEVELS, level_out):
        conv(f"mfrm.{name}.compress", c, m.compressed_channels, 1)
        conv(f"mfrm.{name}.encode", m.compressed_channels, kk, m.encoder_kernel)

    fused = sum(level_out)
    heads = {"patch": h.material_classes} if h.material_classes else {"depth": 1, "reflection": 3, "patch": 1}
    for name, out in heads.items():
        c = fused
        widths = list(h.channels) + [out]
        for i, cout in enumerate(widths):
            conv(f"head.{name}.{i}", c, cout, 3)
            c = cout
    return shapes


def init_params(cfg, seed=0):
    """He-uniform weights (+-sqrt(6 / fan_in)), zero biases; names sorted."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".w"):
            fan_in = shape[1] * shape[2] * shape[3]
            bound = math.sqrt(6.0 / fan_in)
            data = rng.uniform(-bound, bound, size=shape)
        else:
            data = np.zeros(shape)
        params[name] = Tensor(data.astype(np.float32), requires_grad=True, name=name, dtype=np.float32)
    return dict(sorted(params.items()))


def count_params(params):
    return int(sum(t.data.size for t in params.values()))


def cast_params(params, dtype):
    return {k: Tensor(v.data.astype(dtype), requires_grad=True, name=k, dtype=dtype) for k, v in params.items()}


def forward(params, cfg, images):
    """images (N, 3, S, S) in [0, 1] -> :class:`HeadOutputs`."""
    levels = bcn_forward(images, params, cfg.bcn)
    fused = mfrm_forward(levels, params, cfg.mfrm)
    return heads_forward(fused, params, cfg.heads)
