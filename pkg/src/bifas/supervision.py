"""Depth / reflection / patch heads, their losses, targets and the test score.

Predictions are batched NCHW tensors: depth (N, 1, h, w), reflection
(N, 3, h, w), patch (N, 1, h, w) or (N, classes, h, w) in material mode.
Targets for a single sample follow the map files: depth (h, w), reflection
(h, w, 3), patch (h, w); :func:`stack_targets` turns a list into NCHW arrays.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np

from . import ops
from .imageio import load_image, resize_area
from .tensor import Tensor

log = logging.getLogger(__name__)

PROB_EPS = 1e-7
LIVE, SPOOF = "live", "spoof"
MATERIALS = ("live", "replay", "print", "mask", "makeup")


@dataclass
class HeadOutputs:
    depth: Tensor | None
    reflection: Tensor | None
    patch: Tensor


@dataclass
class SupervisionTargets:
    depth: np.ndarray
    reflection: np.ndarray
    patch: np.ndarray


def _head(x, params, name, n_layers):
    for i in range(n_layers):
        x = ops.conv2d(x, params[f"head.{name}.{i}.w"], params[f"head.{name}.{i}.b"])
        if i < n_layers - 1:
            x = ops.relu(x)
    return x


def heads_forward(fused, params, cfg):
    """Three parallel 3x3 conv stacks; sigmoid outputs (channel softmax for material patch)."""
    n_layers = len(cfg.channels) + 1
    patch = _head(fused, params, "patch", n_layers)
    if cfg.material_classes is not None:
        return HeadOutputs(depth=None, reflection=None, patch=ops.softmax_channel(patch))
    return HeadOutputs(
        depth=ops.sigmoid(_head(fused, params, "depth", n_layers)),
        reflection=ops.sigmoid(_head(fused, params, "reflection", n_layers)),
        patch=ops.sigmoid(patch),
    )


def _mse(pred, target):
    target = np.asarray(target, dtype=pred.dtype).reshape(pred.shape)
    diff = pred.data - target
    n = diff.size
    return Tensor._from_op(np.asarray((diff * diff).mean()), (pred,), lambda g: (g * 2.0 * diff / n,))


def loss_depth(pred, target):
    """Mean squared error over every depth pixel."""
    return _mse(pred, target)


def loss_reflection(pred, target):
    """Mean squared error over every reflection pixel and channel."""
    return _mse(pred, target)


def loss_patch(pred, target, eps=PROB_EPS):
    """Binary cross-entropy, or categorical cross-entropy when ``pred`` has >1 channel.

    Probabilities are clamped to [eps, 1 - eps]; clamped entries get no gradient.
    For the categorical case ``target`` holds class indices shaped (N, h, w).
    """
    p = pred.data
    if pred.ndim == 4 and pred.shape[1] > 1:
        t = np.asarray(target, dtype=np.intp).reshape(pred.shape[0], *pred.shape[2:])
        picked = np.take_along_axis(p, t[:, None], axis=1)
        pc = np.clip(picked, eps, 1 - eps)
        n = pc.size
        value = -np.log(pc).mean()

        def backward(g):
            gp = np.zeros_like(p)
            local = np.where((picked > eps) & (picked < 1 - eps), -1.0 / (pc * n), 0.0)
            np.put_along_axis(gp, t[:, None], (g * local).astype(p.dtype), axis=1)
            return (gp,)

        return Tensor._from_op(np.asarray(value, dtype=p.dtype), (pred,), backward)

    t = np.asarray(target, dtype=p.dtype).reshape(p.shape)
    pc = np.clip(p, eps, 1 - eps)
    n = p.size
    value = -(t * np.log(pc) + (1 - t) * np.log(1 - pc)).mean()

    def backward(g):
        inside = (p > eps) & (p < 1 - eps)
        return (g * np.where(inside, -(t / pc - (1 - t) / (1 - pc)) / n, 0.0).astype(p.dtype),)

    return Tensor._from_op(np.asarray(value, dtype=p.dtype), (pred,), backward)


def loss_overall(depth, reflection, patch):
    return ops.add(ops.add(depth, reflection), patch)


def compute_losses(outputs, depth_gt, reflection_gt, patch_gt):
    """Return (overall, parts) where parts maps head name to its scalar loss."""
    if outputs.depth is None:
        lp = loss_patch(outputs.patch, patch_gt)
        return lp, {"patch": lp}
    parts = {
        "depth": loss_depth(outputs.depth, depth_gt),
        "reflection": loss_reflection(outputs.reflection, reflection_gt),
        "patch": loss_patch(outputs.patch, patch_gt),
    }
    return loss_overall(parts["depth"], parts["reflection"], parts["patch"]), parts


def score(outputs):
    """Per-sample mean(depth) + mean(1 - reflection) + mean(patch), in [0, 3]."""
    if outputs.depth is None or outputs.patch.shape[1] != 1:
        raise ValueError("score is only defined for binary (depth/reflection/patch) outputs")
    axes = (1, 2, 3)
    d = outputs.depth.data.astype(np.float64).mean(axis=axes)
    r = (1.0 - outputs.reflection.data.astype(np.float64)).mean(axis=axes)
    p = outputs.patch.data.astype(np.float64).mean(axis=axes)
    return d + r + p


def synthetic_depth(size):
    """Ellipsoidal bump peaking at 1 in the middle, 0 outside the face ellipse."""
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    q = ((yy - c) / (0.46 * size)) ** 2 + ((xx - c) / (0.36 * size)) ** 2
    bump = np.sqrt(np.clip(1.0 - q, 0.0, None))
    return (bump / bump.max()).astype(np.float32)


def synthetic_reflection(size, rng):
    noise = rng.normal(0.0, 0.03, size=(size, size, 3))
    return np.clip(0.6 + noise, 0.0, 1.0).astype(np.float32)


def _load_map(path, size, mode, what):
    if path and os.path.exists(path):
        return resize_area(load_image(path, mode=mode), size)
    log.warning("no %s map at %r; using the synthetic default", what, path)
    return None


def make_targets(label, attack_type=None, depth_path=None, reflection_path=None,
                 size=32, material=None, seed=0):
    """Build per-sample supervision maps.

    Live samples get a depth map (from ``depth_path`` or synthetic) and an
    all-zero reflection map; spoof samples the reverse. The binary patch map
    is 1 for live and 0 for spoof. Passing ``material`` (a name from
    ``MATERIALS`` or an index) fills the patch map with that class index.
    """
    if label not in (LIVE, SPOOF):
        raise ValueError(f"label must be 'live' or 'spoof', got {label!r}")
    zeros = np.zeros((size, size), dtype=np.float32)
    if label == LIVE:
        depth = _load_map(depth_path, size, "L", "depth")
        depth = synthetic_depth(size) if depth is None else depth
        reflection = np.zeros((size, size, 3), dtype=np.float32)
    else:
        depth = zeros.copy()
        reflection = _load_map(reflection_path, size, "RGB", "reflection")
        if reflection is None:
            reflection = synthetic_reflection(size, np.random.default_rng(seed))
    if material is not None:
        idx = MATERIALS.index(material) if isinstance(material, str) else int(material)
        patch = np.full((size, size), idx, dtype=np.int64)
    else:
        patch = np.full((size, size), 1.0 if label == LIVE else 0.0, dtype=np.float32)
    return SupervisionTargets(depth=depth, reflection=reflection, patch=patch)


def stack_targets(targets):
    """List of per-sample targets -> (depth, reflection, patch) batched NCHW arrays."""
    depth = np.stack([t.depth for t in targets])[:, None]
    reflection = np.stack([t.reflection for t in targets]).transpose(0, 3, 1, 2)
    patch = np.stack([t.patch for t in targets])
    if patch.dtype.kind == "f":
        patch = patch[:, None]
    return np.ascontiguousarray(depth), np.ascontiguousarray(reflection), patch
