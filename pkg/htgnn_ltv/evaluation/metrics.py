"""Regression, ranking and classification metrics for long-tailed labels."""

import numpy as np

from ..utils.exceptions import MetricUndefinedError


def _pair(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if y.shape != y_hat.shape:
        raise MetricUndefinedError(f"label and prediction lengths differ: {y.size} vs {y_hat.size}")
    return y, y_hat


def _normaliser(y: np.ndarray) -> float:
    mean = float(y.mean()) if y.size else 0.0
    if mean <= 0:
        raise MetricUndefinedError(f"normalised error needs mean(y) > 0, got {mean}")
    return mean


def nrmse(y, y_hat) -> float:
    """sqrt(mean((y − ŷ)²)) / mean(y)."""
    y, y_hat = _pair(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)) / _normaliser(y))


def nmae(y, y_hat) -> float:
    """mean(|y − ŷ|) / mean(y)."""
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)) / _normaliser(y))


def gini(y, scores) -> float:
    """Area between the cumulative-label curve under descending scores and the diagonal.

    Users with tied scores all receive the mean label of their tie group,
    which equals averaging the curve over every order of the group.
    """
    y, scores = _pair(y, scores)
    total = y.sum()
    if total <= 0:
        raise MetricUndefinedError("GINI needs a positive label sum")
    order = np.argsort(-scores, kind="stable")
    sorted_scores, sorted_y = scores[order], y[order]
    _, group, counts = np.unique(sorted_scores, return_inverse=True, return_counts=True)
    group_means = np.bincount(group, weights=sorted_y) / counts
    cumulative = np.cumsum(group_means[group]) / total
    n = y.size
    return float(cumulative.sum() / n - (n + 1) / (2.0 * n))


def normalized_gini(y, scores) -> float:
    """GINI of the scores divided by the GINI of the perfect ordering.

    Raises:
        MetricUndefinedError: If n < 2, the label sum is zero, or all labels are equal
    """
    y, scores = _pair(y, scores)
    if y.size < 2:
        raise MetricUndefinedError("N-GINI needs at least two samples")
    perfect = gini(y, y)
    if perfect == 0:
        raise MetricUndefinedError("N-GINI is undefined when every label is equal")
    return gini(y, scores) / perfect


def average_ranks(values) -> np.ndarray:
    """1-based ranks with ties sharing the mean of their positions."""
    values = np.asarray(values, dtype=np.float64)
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    return (ends - (counts - 1) / 2.0)[inverse]


def auc(labels, scores) -> float:
    """Mann–Whitney AUC: P(score_pos > score_neg) + ½·P(equal), via tie-averaged rank sums.

    Raises:
        MetricUndefinedError: If only one class is present
    """
    labels, scores = _pair(labels, scores)
    positive = labels > 0.5
    n_pos = int(positive.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("AUC needs both classes present")
    ranks = average_ranks(scores)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
