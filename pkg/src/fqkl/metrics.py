"""Threshold-at-zero classification metrics and a tie-aware PR-AUC."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    pr_auc: float
    tp: int
    fp: int
    tn: int
    fn: int

    def as_dict(self) -> dict:
        return asdict(self)


def pr_curve(scores, labels):
    """Recall/precision at every distinct score, highest first.

    All samples sharing a score enter together, so tied scores form one
    operating point. Returns ``(recall, precision)`` without the origin.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(np.int64)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last_of_group = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(y)[last_of_group]
    predicted = (np.flatnonzero(last_of_group) + 1)
    return tp / y.sum(), tp / predicted


def pr_auc(scores, labels) -> float:
    """Trapezoidal area under precision-vs-recall, anchored at ``(0, 1)``.

    NaN when there are no positives.
    """
    y = np.asarray(labels).astype(np.int64)
    if y.sum() == 0:
        return math.nan
    recall, precision = pr_curve(scores, y)
    r = np.r_[0.0, recall]
    p = np.r_[1.0, precision]
    return float(np.sum(np.diff(r) * (p[1:] + p[:-1]) / 2.0))


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def evaluate(scores, labels) -> EvalReport:
    """Confusion counts at threshold 0 (``score > 0`` means anomaly) plus PR-AUC."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).astype(np.int64).reshape(-1)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    pred = s > 0
    truth = y == 1
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    tn = int(np.sum(~pred & ~truth))
    fn = int(np.sum(~pred & truth))
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2 * tp, 2 * tp + fp + fn)
    return EvalReport(
        accuracy=_ratio(tp + tn, y.shape[0]),
        precision=precision, recall=recall, f1=f1,
        pr_auc=pr_auc(s, y),
        tp=tp, fp=fp, tn=tn, fn=fn,
    )
