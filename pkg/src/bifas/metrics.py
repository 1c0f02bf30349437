"""Presentation-attack detection metrics.

Scores are "liveness" scores: higher means more likely bona fide. A sample is
accepted as live when ``score >= threshold``. Labels are 1 for live and 0 for
attack.

- APCER(t): fraction of attacks accepted as live.
- BPCER(t): fraction of live samples rejected.
- ACER(t) = (APCER + BPCER) / 2; HTER is the same quantity at a threshold
  fixed beforehand on a development split.
- EER: the sweep threshold minimising |APCER - BPCER| (ties: lowest ACER,
  then lowest threshold), reported as the ACER there.
- AUC: Mann-Whitney rank statistic, ties counting one half.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata


def _split(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} differ")
    return np.sort(scores[labels]), np.sort(scores[~labels])


def error_rates(scores, labels, threshold):
    """(APCER, BPCER) at ``threshold``; a rate is NaN when its class is empty."""
    live, attack = _split(scores, labels)
    apcer = float(np.mean(attack >= threshold)) if attack.size else float("nan")
    bpcer = float(np.mean(live < threshold)) if live.size else float("nan")
    return apcer, bpcer


@dataclass
class Sweep:
    thresholds: np.ndarray
    apcer: np.ndarray
    bpcer: np.ndarray

    @property
    def acer(self):
        return (self.apcer + self.bpcer) / 2


def threshold_sweep(scores, labels):
    """Rates at every distinct score and at +inf; this covers every achievable rate pair."""
    live, attack = _split(scores, labels)
    if not live.size or not attack.size:
        raise ValueError("the sweep needs both live and attack samples")
    t = np.append(np.unique(np.concatenate([live, attack])), np.inf)
    apcer = (attack.size - np.searchsorted(attack, t, side="left")) / attack.size
    bpcer = np.searchsorted(live, t, side="left") / live.size
    return Sweep(t, apcer, bpcer)


def eer(scores, labels):
    """Return (EER, threshold)."""
    sw = threshold_sweep(scores, labels)
    gap = np.abs(sw.apcer - sw.bpcer)
    i = np.lexsort((sw.thresholds, sw.acer, gap))[0]
    return float(sw.acer[i]), float(sw.thresholds[i])


def auc(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_live, n_attack = int(labels.sum()), int((~labels).sum())
    if not n_live or not n_attack:
        raise ValueError("AUC needs both live and attack samples")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_live * (n_live + 1) / 2) / (n_live * n_attack))


@dataclass
class EvalReport:
    threshold: float
    threshold_policy: dict
    apcer: float
    bpcer: float
    acer: float
    eer: float | None
    eer_threshold: float | None
    auc: float | None
    hter: float | None = None
    apcer_per_attack: dict = field(default_factory=dict)
    apcer_max_attack: float | None = None
    n_live: int = 0
    n_attack: int = 0
    sweep: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def evaluate_scores(scores, labels, attack_types=None, dev_scores=None, dev_labels=None,
                    threshold=None):
    """Full report for one scored set.

    Threshold policy: an explicit ``threshold`` wins; otherwise the EER
    threshold of the dev split when given (HTER is then reported); otherwise
    the test set's own EER threshold, flagged in ``threshold_policy``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_live, n_attack = int(labels.sum()), int((~labels).sum())
    both = n_live > 0 and n_attack > 0

    e = et = a = None
    sweep = []
    if both:
        e, et = eer(scores, labels)
        a = auc(scores, labels)
        sw = threshold_sweep(scores, labels)
        sweep = [
            {"threshold": float(t), "apcer": float(x), "bpcer": float(y), "acer": float(z)}
            for t, x, y, z in zip(sw.thresholds, sw.apcer, sw.bpcer, sw.acer)
        ]

    hter = None
    if threshold is not None:
        policy = {"policy": "fixed", "threshold": float(threshold)}
    elif dev_scores is not None:
        _, threshold = eer(dev_scores, dev_labels)
        policy = {"policy": "dev_eer", "threshold": threshold}
    elif both:
        threshold = et
        policy = {"policy": "test_eer", "threshold": threshold,
                  "note": "no dev split given; threshold chosen on the evaluated set"}
    else:
        threshold = 0.5 * 3
        policy = {"policy": "midpoint", "threshold": threshold,
                  "note": "single-class set; EER/AUC undefined"}

    apcer, bpcer = error_rates(scores, labels, threshold)
    acer = (apcer + bpcer) / 2
    if policy["policy"] == "dev_eer":
        hter = acer

    per_attack = {}
    if attack_types is not None:
        types = np.asarray([t if t is not None else "" for t in attack_types], dtype=object)
        for kind in sorted({t for t, live in zip(types, labels) if not live and t}):
            sel = (types == kind) & ~labels
            per_attack[kind] = float(np.mean(scores[sel] >= threshold))
    return EvalReport(
        threshold=float(threshold), threshold_policy=policy,
        apcer=apcer, bpcer=bpcer, acer=acer, eer=e, eer_threshold=et, auc=a, hter=hter,
        apcer_per_attack=per_attack,
        apcer_max_attack=max(per_attack.values()) if per_attack else None,
        n_live=n_live, n_attack=n_attack, sweep=sweep,
    )
