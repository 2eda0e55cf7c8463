"""Ranking metrics for link prediction: AUC, average precision and best F1.

Tie conventions are fixed so results are reproducible: tied scores earn half
credit in AUC, and in average precision tied items keep their original index
order after a descending sort on score.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata


def _prepare(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return scores, labels.astype(bool)


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2)."""
    scores, labels = _prepare(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined without both positive and negative labels")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _ranking(scores):
    return np.lexsort((np.arange(scores.size), -scores))


def aupr(scores, labels) -> float:
    """Average precision: mean of precision@k over the ranks k that hold a positive."""
    scores, labels = _prepare(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("AUPR is undefined without positive labels")
    ranked = labels[_ranking(scores)]
    hits = np.cumsum(ranked)
    precision = hits / np.arange(1, ranked.size + 1)
    return float(precision[ranked].sum() / n_pos)


def f1_best(scores, labels) -> tuple[float, float]:
    """Best F1 over thresholds between adjacent distinct scores plus +-inf.

    A cell is predicted positive when its score exceeds the threshold. Ties
    in F1 resolve to the lowest threshold.
    """
    scores, labels = _prepare(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("F1 is undefined without positive labels")
    distinct = np.unique(scores)
    thresholds = np.concatenate([[-np.inf], (distinct[:-1] + distinct[1:]) / 2.0, [np.inf]])
    order = np.argsort(scores, kind="stable")
    s_sorted, l_sorted = scores[order], labels[order]
    # number of items with score > t for each threshold t
    above = scores.size - np.searchsorted(s_sorted, thresholds, side="right")
    pos_above = n_pos - np.concatenate([[0], np.cumsum(l_sorted)])[scores.size - above]
    f1 = np.where(above > 0, 2.0 * pos_above / (above + n_pos), 0.0)
    best = int(np.argmax(f1))
    return float(f1[best]), float(thresholds[best])


def confusion_at(scores, labels, threshold: float) -> dict:
    scores, labels = _prepare(scores, labels)
    pred = scores > threshold
    return {"tp": int(np.sum(pred & labels)), "fp": int(np.sum(pred & ~labels)),
            "tn": int(np.sum(~pred & ~labels)), "fn": int(np.sum(~pred & labels))}


def roc_points(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """``(fpr, tpr)`` at every distinct score threshold, starting from ``(0, 0)``."""
    scores, labels = _prepare(scores, labels)
    order = _ranking(scores)
    s, l = scores[order], labels[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(l)[last]
    fp = (last + 1) - tp
    return (np.r_[0.0, fp / max(1, (~labels).sum())], np.r_[0.0, tp / max(1, labels.sum())])


def pr_points(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """``(recall, precision)`` at every rank."""
    scores, labels = _prepare(scores, labels)
    ranked = labels[_ranking(scores)]
    hits = np.cumsum(ranked)
    return hits / max(1, labels.sum()), hits / np.arange(1, ranked.size + 1)


@dataclass
class RankingMetrics:
    auc: float
    aupr: float
    f1: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int

    def as_dict(self) -> dict:
        return asdict(self)


def ranking_metrics(scores, labels) -> RankingMetrics:
    f1, thr = f1_best(scores, labels)
    return RankingMetrics(auc(scores, labels), aupr(scores, labels), f1, thr,
                          **confusion_at(scores, labels, thr))
