"""Evaluation metrics.

All metrics are computed in float64 regardless of run precision. When a
metric's denominator is undefined (no positive predictions, zero
variance, an empty confusion-matrix factor) the value is a sentinel 0.0
and a MetricUndefined warning is emitted, so sweeps never crash on a
degenerate cell.

F1 and MCC are binary metrics over {0, 1} labels with 1 as the positive
class. Spearman uses average ranks for ties.
"""

from __future__ import annotations

import warnings

import numpy as np

METRIC_IDS = ("accuracy", "f1", "mcc", "pearson", "spearman")


class MetricUndefined(RuntimeWarning):
    """A metric denominator was zero; a sentinel 0.0 was returned."""


def _sentinel(reason: str) -> float:
    warnings.warn(f"metric undefined ({reason}); returning 0.0", MetricUndefined,
                  stacklevel=3)
    return 0.0


def _check(predictions, references) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predictions)
    r = np.asarray(references)
    if p.shape != r.shape or p.ndim != 1:
        raise ValueError(f"predictions and references must be equal-length 1d, got {p.shape} vs {r.shape}")
    if p.size == 0:
        raise ValueError("cannot compute a metric over zero examples")
    return p, r


def accuracy(predictions, references) -> float:
    p, r = _check(predictions, references)
    return float(np.mean(p == r))


def f1(predictions, references) -> float:
    p, r = _check(predictions, references)
    tp = int(np.sum((p == 1) & (r == 1)))
    fp = int(np.sum((p == 1) & (r == 0)))
    fn = int(np.sum((p == 0) & (r == 1)))
    denom = 2 * tp + fp + fn
    if denom == 0:
        return _sentinel("no positive labels or predictions")
    return 2.0 * tp / denom


def mcc(predictions, references) -> float:
    p, r = _check(predictions, references)
    tp = int(np.sum((p == 1) & (r == 1)))
    tn = int(np.sum((p == 0) & (r == 0)))
    fp = int(np.sum((p == 1) & (r == 0)))
    fn = int(np.sum((p == 0) & (r == 1)))
    denom2 = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom2 == 0:
        return _sentinel("a confusion-matrix margin is empty")
    return (tp * tn - fp * fn) / float(np.sqrt(denom2))


def pearson(predictions, references) -> float:
    p, r = _check(predictions, references)
    if p.size < 2:
        raise ValueError("pearson needs at least two points")
    x = p.astype(np.float64) - np.mean(p, dtype=np.float64)
    y = r.astype(np.float64) - np.mean(r, dtype=np.float64)
    sx = np.sqrt(np.sum(x * x))
    sy = np.sqrt(np.sum(y * y))
    if sx == 0.0 or sy == 0.0:
        return _sentinel("zero variance")
    return float(np.sum(x * y) / (sx * sy))


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank range."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(predictions, references) -> float:
    p, r = _check(predictions, references)
    if p.size < 2:
        raise ValueError("spearman needs at least two points")
    x, y = average_ranks(p), average_ranks(r)
    if np.all(x == x[0]) or np.all(y == y[0]):
        return _sentinel("constant ranks")
    return pearson(x, y)


_FUNCS = {
    "accuracy": accuracy,
    "f1": f1,
    "mcc": mcc,
    "pearson": pearson,
    "spearman": spearman,
}


def metric(predictions, references, metric_id: str) -> float:
    """Dispatch by metric id; see METRIC_IDS."""
    if metric_id not in _FUNCS:
        raise ValueError(f"unknown metric {metric_id!r}; expected one of {METRIC_IDS}")
    return _FUNCS[metric_id](predictions, references)
