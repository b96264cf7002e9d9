"""Binary classification metrics: accuracy, positive-class F1, ROC-AUC."""

from __future__ import annotations

import numpy as np


def accuracy(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    pred = (scores >= threshold).astype(int)
    return float((pred == labels).mean())


def f1_score(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    """Positive-class F1; 0.0 when there are no positive predictions."""
    pred = (scores >= threshold).astype(int)
    tp = int(((pred == 1) & (labels == 1)).sum())
    fp = int(((pred == 1) & (labels == 0)).sum())
    fn = int(((pred == 0) & (labels == 1)).sum())
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def roc_auc(scores: np.ndarray, labels: np.ndarray):
    """Rank-statistic AUC with ties counted 1/2; None for single-class input."""
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(scores, kind="stable")
    sorted_scores = np.asarray(scores)[order]
    ranks = np.empty(len(scores))
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1  # average rank, 1-based
        i = j + 1
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def evaluate_scores(scores: np.ndarray, labels: np.ndarray) -> dict:
    return {
        "accuracy": accuracy(scores, labels),
        "f1": f1_score(scores, labels),
        "auc": roc_auc(scores, labels),
    }
