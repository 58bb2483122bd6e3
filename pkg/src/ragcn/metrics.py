"""Accuracy, macro F1 and ROC AUC for node classification."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class UndefinedMetricError(ValueError):
    pass


@dataclass
class ConfusionCounts:
    tp: np.ndarray
    tn: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.tp.shape[0]

    @property
    def total(self) -> int:
        return int(self.tp[0] + self.tn[0] + self.fp[0] + self.fn[0])


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    roc_auc: float | None
    per_class_f1: list[float]
    confusion: ConfusionCounts | None = field(default=None, repr=False)
    undefined_f1_classes: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "roc_auc": self.roc_auc,
            "per_class_f1": self.per_class_f1,
        }


def predict(q: np.ndarray) -> np.ndarray:
    """Row argmax; numpy resolves ties to the lowest class index."""
    return np.argmax(np.asarray(q), axis=1)


def confusion(pred, true, mask=None, n_classes: int | None = None) -> ConfusionCounts:
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape:
        raise ValueError(f"prediction and label lengths differ: {pred.shape} vs {true.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        pred, true = pred[mask], true[mask]
    if pred.size == 0:
        raise ValueError("cannot score an empty evaluation mask")
    if n_classes is None:
        n_classes = int(max(pred.max(), true.max())) + 1
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    tp = np.diag(cm).copy()
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    tn = pred.size - tp - fp - fn
    return ConfusionCounts(tp, tn, fp, fn)


def accuracy(counts: ConfusionCounts, n: int | None = None) -> float:
    n = counts.total if n is None else n
    if n < 1:
        raise ValueError("accuracy needs at least one node")
    return float(counts.tp.sum() / n)


def per_class_f1(counts: ConfusionCounts) -> tuple[np.ndarray, list[int]]:
    denom = 2 * counts.tp + counts.fp + counts.fn
    undefined = np.flatnonzero(denom == 0).tolist()
    with np.errstate(divide="ignore", invalid="ignore"):
        f1 = np.where(denom > 0, 2 * counts.tp / np.where(denom > 0, denom, 1), 0.0)
    return f1, undefined


def macro_f1(counts: ConfusionCounts) -> float:
    f1, _ = per_class_f1(counts)
    return float(f1.mean())


def roc_auc(scores, labels) -> float:
    """P(score of random positive > score of random negative), ties counted half.

    Computed from average ranks (Mann-Whitney U), O(n log n).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC AUC needs both positive and negative samples")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size)
    # Average rank (1-based) over each run of tied scores.
    starts = np.flatnonzero(np.r_[True, sorted_scores[1:] != sorted_scores[:-1]])
    ends = np.r_[starts[1:], scores.size]
    avg = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(avg, ends - starts)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def evaluate(q: np.ndarray, labels, mask) -> MetricsReport:
    """Score the class-probability matrix ``q`` on the nodes in ``mask``."""
    q = np.asarray(q)
    labels = np.asarray(labels)
    mask = np.asarray(mask, dtype=bool)
    n_classes = q.shape[1]
    counts = confusion(predict(q), labels, mask, n_classes)
    f1, undefined = per_class_f1(counts)
    auc = None
    if n_classes == 2:
        try:
            auc = roc_auc(q[mask, 1], labels[mask])
        except UndefinedMetricError:
            auc = None
    return MetricsReport(
        accuracy=accuracy(counts),
        macro_f1=float(f1.mean()),
        roc_auc=auc,
        per_class_f1=[float(v) for v in f1],
        confusion=counts,
        undefined_f1_classes=undefined,
    )
