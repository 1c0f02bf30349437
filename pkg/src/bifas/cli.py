"""Command-line entry point: ``bifas <subcommand> ...``.

Log verbosity follows the ``BIFAS_LOG_LEVEL`` environment variable
(DEBUG, INFO, WARNING, ...; default INFO).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

log = logging.getLogger("bifas")


def _setup_logging():
    level = os.environ.get("BIFAS_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def cmd_train(args):
    from .config import ModelConfig, TrainConfig, load_config
    from .data import load_samples, read_manifest
    from .train import train_arrays

    model_cfg, train_cfg = load_config(args.config) if args.config else (ModelConfig(), TrainConfig())
    entries = read_manifest(args.manifest)
    images, targets, labels, _ = load_samples(entries, model_cfg.bcn.input_size, model_cfg.bcn.map_size,
                                              material_mode=model_cfg.material_mode)
    log.info("training on %d samples (%d live)", len(labels), int(labels.sum()))
    result = train_arrays(images, targets, labels, model_cfg, train_cfg, out_dir=args.out)
    last = result.epoch_log[-1]["loss"] if result.epoch_log else float("nan")
    print(f"trained {result.steps} steps; final epoch loss {last:.6f}; checkpoint {os.path.join(args.out, 'final.ckpt')}")
    return 0


def cmd_eval(args):
    from .data import load_samples, read_manifest
    from .train import evaluate, load_checkpoint_model

    params, cfg = load_checkpoint_model(args.checkpoint)
    if cfg.material_mode:
        print("error: eval reports are defined for binary checkpoints only", file=sys.stderr)
        return 2

    def load(path):
        images, _, labels, attacks = load_samples(read_manifest(path), cfg.bcn.input_size, cfg.bcn.map_size)
        return images, labels, attacks

    images, labels, attacks = load(args.manifest)
    dev = None
    if args.dev_manifest:
        dev_images, dev_labels, _ = load(args.dev_manifest)
        dev = (dev_images, dev_labels)
    report, scores = evaluate(params, cfg, images, labels, attacks, dev=dev, threshold=args.threshold)
    out = report.to_dict()
    out["scores"] = scores.tolist()
    with open(args.report, "w") as fh:
        json.dump(out, fh, indent=2)
    fmt = lambda v: "n/a" if v is None else f"{v:.4f}"  # noqa: E731
    print(f"threshold {report.threshold:.6f} ({report.threshold_policy['policy']})")
    print(f"APCER {report.apcer:.4f}  BPCER {report.bpcer:.4f}  ACER {report.acer:.4f}  "
          f"EER {fmt(report.eer)}  AUC {fmt(report.auc)}  HTER {fmt(report.hter)}")
    return 0


def cmd_infer(args):
    from .imageio import load_image, resize_area, save_png
    from .supervision import MATERIALS, score
    from .train import load_checkpoint_model, predict

    params, cfg = load_checkpoint_model(args.checkpoint)
    img = resize_area(load_image(args.image), cfg.bcn.input_size).transpose(2, 0, 1)[None]
    out = predict(params, cfg, img)[0]
    os.makedirs(args.out, exist_ok=True)
    if cfg.material_mode:
        probs = out.patch.data[0].mean(axis=(1, 2))
        names = MATERIALS if len(probs) == len(MATERIALS) else [str(i) for i in range(len(probs))]
        print(json.dumps({n: round(float(p), 6) for n, p in zip(names, probs)}))
        save_png(os.path.join(args.out, "patch.png"), out.patch.data[0].argmax(axis=0) / max(1, len(probs) - 1))
        return 0
    print(f"{float(score(out)[0]):.6f}")
    save_png(os.path.join(args.out, "depth.png"), out.depth.data[0, 0])
    save_png(os.path.join(args.out, "reflection.png"), out.reflection.data[0].transpose(1, 2, 0))
    save_png(os.path.join(args.out, "patch.png"), out.patch.data[0, 0])
    return 0


def cmd_filter(args):
    from .bilateral import BilateralParams, bilateral_decompose
    from .imageio import load_image, save_png

    img = load_image(args.image)
    p = None
    if args.sigma_s or args.sigma_r:
        d = BilateralParams.defaults_for(img) or BilateralParams(min(img.shape[:2]) / 16, 0.1, 3)
        ss = args.sigma_s or d.sigma_s
        p = BilateralParams(ss, args.sigma_r or d.sigma_r, 2 * int(np.ceil(2 * ss)) + 1)
    dec = bilateral_decompose(img, p)
    os.makedirs(args.out, exist_ok=True)
    save_png(os.path.join(args.out, "base.png"), dec.base)
    # residual is signed; shift to mid-grey for viewing
    save_png(os.path.join(args.out, "residual.png"), dec.residual + 0.5)
    print(f"wrote base.png and residual.png to {args.out}")
    return 0


def cmd_gradcheck(args):
    from .checks import CHECKS, TOLERANCE, run_checks

    names = [args.op] if args.op else None
    if args.op and args.op not in CHECKS:
        print(f"unknown op {args.op!r}; choose from: {', '.join(CHECKS)}", file=sys.stderr)
        return 2
    worst = 0.0
    for name, err in run_checks(names).items():
        status = "ok" if err < TOLERANCE else "FAIL"
        print(f"{name:12s} {err:.3e} {status}")
        worst = max(worst, err)
    return 0 if worst < TOLERANCE else 1


def cmd_synth(args):
    from .data import synth_dataset

    path = synth_dataset(args.live, args.spoof, args.seed, args.out)
    print(path)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="bifas", description="Bilateral face anti-spoofing toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="train a model on a manifest")
    s.add_argument("--config", help="JSON config with model/train sections (defaults when omitted)")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="output directory for checkpoints and metrics.jsonl")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="score a manifest and write a JSON report")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--dev-manifest", help="split used to fix the threshold (its EER threshold)")
    s.add_argument("--threshold", type=float, help="fixed threshold; overrides --dev-manifest")
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("infer", help="score one image and write the predicted maps")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--image", required=True)
    s.add_argument("--out", default=".", help="directory for depth.png, reflection.png, patch.png")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("filter", help="bilateral base/residual decomposition of an image")
    s.add_argument("--image", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--sigma-s", type=float)
    s.add_argument("--sigma-r", type=float)
    s.set_defaults(func=cmd_filter)

    s = sub.add_parser("gradcheck", help="run the built-in finite-difference checks")
    s.add_argument("--op", help="run a single check")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("synth", help="generate a synthetic live/spoof set")
    s.add_argument("--live", type=int, required=True)
    s.add_argument("--spoof", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
