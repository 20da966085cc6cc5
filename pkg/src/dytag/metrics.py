"""Ranking and classification metrics."""
from __future__ import annotations

import numpy as np


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: (#{pos>neg} + 0.5*#{pos=neg}) / (P*N)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    pos = labels == 1
    p, n = int(pos.sum()), int((~pos).sum())
    if p == 0 or n == 0:
        raise ValueError("auc needs at least one positive and one negative")
    ranks = _average_ranks(scores)
    return float((ranks[pos].sum() - p * (p + 1) / 2.0) / (p * n))


def average_precision(scores, labels) -> float:
    """Mean precision at each positive's rank, scores descending.

    Ties are broken by stable input order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if (labels == 1).sum() == 0:
        raise ValueError("average_precision needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    hits = labels[order] == 1
    cum_pos = np.cumsum(hits)
    ranks = np.arange(1, len(scores) + 1)
    return float((cum_pos[hits] / ranks[hits]).mean())


def weighted_precision(pred_labels, true_labels, num_classes: int) -> float:
    """Support-weighted per-class precision.

    A class that is never predicted contributes precision 0.
    """
    preds = np.asarray(pred_labels, dtype=np.int64)
    truth = np.asarray(true_labels, dtype=np.int64)
    if len(preds) != len(truth):
        raise ValueError("pred/true length mismatch")
    if len(preds) == 0:
        raise ValueError("weighted_precision: empty input")
    total = 0.0
    for c in range(num_classes):
        support = int((truth == c).sum())
        if support == 0:
            continue
        predicted = int((preds == c).sum())
        if predicted:
            precision = int(((preds == c) & (truth == c)).sum()) / predicted
        else:
            precision = 0.0
        total += (support / len(truth)) * precision
    return total


def spearman(x, y) -> float:
    """Spearman rank correlation (average ranks for ties).

    Returns nan if either input has zero rank variance.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("spearman needs two equal-length sequences of >=2 points")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    sx, sy = rx.std(), ry.std()
    if sx == 0.0 or sy == 0.0:
        return float("nan")
    return float(((rx - rx.mean()) * (ry - ry.mean())).mean() / (sx * sy))
