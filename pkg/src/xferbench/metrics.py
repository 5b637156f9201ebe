"""Confusion matrix, accuracy, per-class F1 and macro-F1 over the 5 stages."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from xferbench.errors import EmptyInput, EmptyMatrix, LengthMismatch
from xferbench.stages import N_STAGES


@dataclass(frozen=True)
class MetricSet:
    acc: float
    per_class_f1: tuple[float, ...]
    mf1: float

    def as_percent(self) -> dict:
        return {
            "acc": 100.0 * self.acc,
            "mf1": 100.0 * self.mf1,
            "per_class_f1": [100.0 * f for f in self.per_class_f1],
        }


def confusion(true_labels, pred_labels) -> np.ndarray:
    """5x5 counts; rows are true stages, columns predicted stages."""
    t = np.asarray(true_labels, dtype=np.int64).ravel()
    p = np.asarray(pred_labels, dtype=np.int64).ravel()
    if t.shape != p.shape:
        raise LengthMismatch(f"{len(t)} true labels vs {len(p)} predictions")
    if t.size == 0:
        raise EmptyInput("confusion of empty label lists")
    if t.min() < 0 or t.max() >= N_STAGES or p.min() < 0 or p.max() >= N_STAGES:
        raise ValueError("labels must be stage ordinals 0..4")
    return np.bincount(t * N_STAGES + p, minlength=N_STAGES * N_STAGES).reshape(N_STAGES, N_STAGES)


def metric_set(cm) -> MetricSet:
    """ACC and per-class F1; MF1 always divides by the 5 stages.

    A class with ``precision + recall == 0`` (including one that is neither
    present nor predicted) scores F1 = 0.
    """
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total <= 0:
        raise EmptyMatrix("confusion matrix has no scored epochs")
    tp = np.diag(cm).astype(np.float64)
    true_n = cm.sum(axis=1).astype(np.float64)
    pred_n = cm.sum(axis=0).astype(np.float64)
    f1 = []
    for c in range(N_STAGES):
        prec = tp[c] / pred_n[c] if pred_n[c] > 0 else 0.0
        rec = tp[c] / true_n[c] if true_n[c] > 0 else 0.0
        f1.append(2.0 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0)
    return MetricSet(
        acc=float(tp.sum() / total),
        per_class_f1=tuple(float(v) for v in f1),
        mf1=float(sum(f1) / N_STAGES),
    )


def score(true_labels, pred_labels) -> MetricSet:
    return metric_set(confusion(true_labels, pred_labels))
