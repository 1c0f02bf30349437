"""Training loop, scoring and evaluation on manifests."""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import model as M
from .checkpoint import checkpoint_load, checkpoint_save, params_from_arrays
from .config import ModelConfig
from .metrics import evaluate_scores
from .optim import AdamState, adam_step, lr_schedule
from .supervision import compute_losses, score
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    params: dict
    step_losses: list = field(default_factory=list)
    epoch_log: list = field(default_factory=list)
    steps: int = 0


def _batch_targets(targets, idx):
    depth, reflection, patch = targets
    return depth[idx], reflection[idx], patch[idx]


def train_arrays(images, targets, labels, model_cfg, train_cfg, out_dir=None, params=None):
    """Minimise the overall loss with Adam over shuffled mini-batches.

    Deterministic for a given ``train_cfg.seed``: parameter init, shuffling
    and every update are seeded. With ``out_dir`` the per-epoch log is
    appended to ``metrics.jsonl`` and checkpoints ``epoch_XXXX.ckpt`` /
    ``final.ckpt`` are written.
    """
    n = len(images)
    if n == 0:
        raise ValueError("empty training set")
    if not model_cfg.material_mode and len(set(np.asarray(labels).tolist())) < 2:
        raise ValueError("binary training needs both live and spoof samples")
    params = params if params is not None else M.init_params(model_cfg, seed=train_cfg.seed)
    rng = np.random.default_rng(train_cfg.seed)
    state = AdamState()
    result = TrainResult(params=params)
    config_dict = {"model": model_cfg.to_dict(), "train": dataclasses.asdict(train_cfg)}
    metrics_fh = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        metrics_fh = open(os.path.join(out_dir, "metrics.jsonl"), "w")

    try:
        for epoch in range(train_cfg.max_epochs):
            if train_cfg.max_steps is not None and result.steps >= train_cfg.max_steps:
                break
            lr = lr_schedule(epoch, train_cfg.lr, train_cfg.lr_halving_period)
            order = rng.permutation(n)
            losses = []
            for start in range(0, n, train_cfg.batch_size):
                if train_cfg.max_steps is not None and result.steps >= train_cfg.max_steps:
                    break
                idx = order[start:start + train_cfg.batch_size]
                out = M.forward(params, model_cfg, Tensor(images[idx], dtype=np.float32))
                loss, parts = compute_losses(out, *_batch_targets(targets, idx))
                loss.backward()
                adam_step({k: p.data for k, p in params.items()},
                          {k: p.grad for k, p in params.items()}, state, lr, train_cfg.weight_decay)
                for p in params.values():
                    p.grad = None
                result.steps += 1
                losses.append(loss.item())
                result.step_losses.append(loss.item())
            record = {"epoch": epoch, "lr": lr, "steps": result.steps, "loss": float(np.mean(losses))}
            result.epoch_log.append(record)
            log.info("epoch %d lr %.3g loss %.5f", epoch, lr, record["loss"])
            if metrics_fh:
                metrics_fh.write(json.dumps(record) + "\n")
                metrics_fh.flush()
                if train_cfg.checkpoint_every and (epoch + 1) % train_cfg.checkpoint_every == 0:
                    checkpoint_save(os.path.join(out_dir, f"epoch_{epoch + 1:04d}.ckpt"), params,
                                    config=config_dict, meta={"epoch": epoch + 1, "steps": result.steps})
    finally:
        if metrics_fh:
            metrics_fh.close()
    if out_dir:
        checkpoint_save(os.path.join(out_dir, "final.ckpt"), params, config=config_dict,
                        meta={"epoch": len(result.epoch_log), "steps": result.steps})
    return result


def predict(params, model_cfg, images, batch_size=16):
    """Run the model without recording a graph; returns list of HeadOutputs per batch."""
    outs = []
    with no_grad():
        for start in range(0, len(images), batch_size):
            outs.append(M.forward(params, model_cfg, Tensor(images[start:start + batch_size], dtype=np.float32)))
    return outs


def predict_scores(params, model_cfg, images, batch_size=16):
    return np.concatenate([score(o) for o in predict(params, model_cfg, images, batch_size)])


def load_checkpoint_model(path):
    """Rebuild (params, ModelConfig) from a checkpoint written by training."""
    arrays, header = checkpoint_load(path)
    cfg_raw = (header.get("config") or {}).get("model")
    model_cfg = ModelConfig.from_dict(cfg_raw) if cfg_raw else ModelConfig()
    checkpoint_load(path, expected=M.param_shapes(model_cfg))
    return params_from_arrays(arrays), model_cfg


def evaluate(params, model_cfg, images, labels, attack_types=None, dev=None, threshold=None):
    """Score ``images`` and build an :class:`EvalReport`.

    ``dev`` is an optional ``(images, labels)`` pair used to fix the threshold.
    """
    scores = predict_scores(params, model_cfg, images)
    dev_scores = dev_labels = None
    if dev is not None:
        dev_scores = predict_scores(params, model_cfg, dev[0])
        dev_labels = dev[1]
    report = evaluate_scores(scores, labels, attack_types, dev_scores, dev_labels, threshold=threshold)
    return report, scores
