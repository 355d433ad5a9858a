"""Classification and regression metrics.

Conventions: a score is called positive when it is strictly greater than
the threshold; AUC gives half credit to tied positive/negative pairs; the
Youden threshold is searched over midpoints between consecutive distinct
scores plus ``-inf`` and ``+inf``, with ties going to the smaller threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .data import write_table
from .errors import MetricError


def _binary(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels, dtype=float).ravel()
    if s.shape != y.shape:
        raise MetricError(f"{s.shape[0]} scores for {y.shape[0]} labels")
    if not np.all((y == 0) | (y == 1)):
        raise MetricError("labels must be 0/1")
    if np.any(np.isnan(s)):
        raise MetricError("scores contain NaN")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise MetricError("both classes must be present")
    return s, y.astype(bool)


@dataclass
class RocCurve:
    thresholds: np.ndarray
    sensitivities: np.ndarray
    specificities: np.ndarray

    def to_csv(self, path) -> None:
        write_table(path, ["threshold", "sensitivity", "specificity"],
                    list(zip(self.thresholds, self.sensitivities, self.specificities)))


def candidate_thresholds(scores) -> np.ndarray:
    u = np.unique(np.asarray(scores, dtype=float))
    mids = 0.5 * (u[:-1] + u[1:])
    return np.concatenate([[-np.inf], mids, [np.inf]])


def roc_curve(scores, labels) -> RocCurve:
    """Sensitivity/specificity at every candidate threshold (ascending)."""
    s, y = _binary(scores, labels)
    thr = candidate_thresholds(s)
    pos = np.sort(s[y])
    neg = np.sort(s[~y])
    # counts of scores <= t for each threshold
    tp = pos.size - np.searchsorted(pos, thr, side="right")
    tn = np.searchsorted(neg, thr, side="right")
    return RocCurve(thr, tp / pos.size, tn / neg.size)


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative."""
    s, y = _binary(scores, labels)
    ranks = rankdata(s)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_trapezoid(scores, labels) -> float:
    """Trapezoidal area under the ROC curve."""
    roc = roc_curve(scores, labels)
    fpr = 1.0 - roc.specificities
    tpr = roc.sensitivities
    # thresholds ascend, so both rates descend; integrate from the far end
    return float(np.sum(0.5 * (tpr[:-1] + tpr[1:]) * (fpr[:-1] - fpr[1:])))


@dataclass(frozen=True)
class YoudenResult:
    threshold: float
    j: float
    accuracy: float


def youden(scores, labels) -> YoudenResult:
    s, y = _binary(scores, labels)
    roc = roc_curve(s, y)
    J = roc.sensitivities + roc.specificities - 1.0
    k = int(np.argmax(J))  # first maximum is the smallest threshold
    t = float(roc.thresholds[k])
    return YoudenResult(t, float(J[k]), accuracy(s, y, t))


def accuracy(scores, labels, threshold: float) -> float:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels, dtype=float).ravel().astype(bool)
    return float(np.mean((s > threshold) == y))


def f_score(scores, labels, threshold: float) -> float:
    """F1 at ``threshold``; zero when precision and recall are both zero."""
    s, y = _binary(scores, labels)
    pred = s > threshold
    tp = float(np.sum(pred & y))
    fp = float(np.sum(pred & ~y))
    fn = float(np.sum(~pred & y))
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def rmse(predicted, y) -> float:
    p = np.asarray(predicted, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if p.shape != y.shape:
        raise MetricError(f"{p.shape[0]} predictions for {y.shape[0]} outcomes")
    return float(np.sqrt(np.mean((p - y) ** 2)))


@dataclass(frozen=True)
class ClassificationSummary:
    auc: float
    youden_threshold: float
    youden_j: float
    accuracy_at_j: float
    accuracy_at_half: float
    f_score: float

    def as_dict(self) -> dict:
        return {"auc": self.auc, "youden_threshold": self.youden_threshold, "youden_j": self.youden_j,
                "accuracy_at_j": self.accuracy_at_j, "accuracy_at_half": self.accuracy_at_half,
                "f_score": self.f_score}


def summarize(scores, labels) -> ClassificationSummary:
    """All binary metrics for mean-scale scores; F-score uses the Youden cutoff."""
    yr = youden(scores, labels)
    return ClassificationSummary(auc(scores, labels), yr.threshold, yr.j, yr.accuracy,
                                 accuracy(scores, labels, 0.5), f_score(scores, labels, yr.threshold))
