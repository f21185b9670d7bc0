"""Prediction and clustering agreement metrics."""
from __future__ import annotations

import numpy as np


def mape(actual: np.ndarray, predicted: np.ndarray) -> float:
    """Mean absolute percentage error: (100/m) * sum(|A - P| / |A|).

    Rows with actual == 0 are excluded (count them with zero_actual_count
    when reporting); raises on empty input or when nothing remains.
    """
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if actual.shape != predicted.shape:
        raise ValueError("actual and predicted must have equal length")
    if actual.size == 0:
        raise ValueError("empty input")
    keep = actual != 0.0
    if not keep.any():
        raise ValueError("all actual values are zero; MAPE undefined")
    a = actual[keep]
    p = predicted[keep]
    return float(100.0 / a.size * np.sum(np.abs(a - p) / np.abs(a)))


def zero_actual_count(actual: np.ndarray) -> int:
    return int(np.count_nonzero(np.asarray(actual, dtype=float) == 0.0))


def threshold_coverage(
    actual: np.ndarray, predicted: np.ndarray, thresholds: list[float]
) -> dict[float, float]:
    """Percentage of rows with |actual - predicted| within each threshold (minutes)."""
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if actual.shape != predicted.shape:
        raise ValueError("actual and predicted must have equal length")
    if actual.size == 0:
        raise ValueError("empty input")
    err = np.abs(actual - predicted)
    return {float(t): float(100.0 * np.count_nonzero(err <= t) / err.size) for t in thresholds}


def adjusted_rand_index(labels_a: np.ndarray, labels_b: np.ndarray) -> float:
    """Chance-corrected agreement between two partitions; 1.0 means identical."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("label vectors must be 1-D and of equal length")
    n = a.size
    if n == 0:
        raise ValueError("empty input")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    contingency = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(contingency, (ai, bi), 1)

    def comb2(x: np.ndarray) -> np.ndarray:
        return x * (x - 1) / 2.0

    sum_ij = comb2(contingency).sum()
    sum_a = comb2(contingency.sum(axis=1)).sum()
    sum_b = comb2(contingency.sum(axis=0)).sum()
    total = comb2(np.array([n]))[0]
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0  # both partitions are trivial or identical by construction
    return float((sum_ij - expected) / (max_index - expected))
