"""Evaluation metrics: accuracy and Cohen's kappa."""

from __future__ import annotations

import warnings

import numpy as np

__all__ = ["accuracy", "cohens_kappa"]


def accuracy(y_true, y_pred):
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    if t.shape != p.shape or t.size == 0:
        raise ValueError("need matching non-empty label arrays")
    return float((t == p).mean())


def cohens_kappa(y_true, y_pred, num_classes=None):
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e).

    If the marginals force p_e = 1 (both raters constant and identical),
    the statistic is undefined; we return 0.0 with a warning rather than
    divide by zero.
    """
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.shape != p.shape or t.size == 0:
        raise ValueError("need matching non-empty label arrays")
    m = int(num_classes) if num_classes is not None else int(max(t.max(), p.max())) + 1
    table = np.zeros((m, m), dtype=np.int64)
    np.add.at(table, (t, p), 1)
    n = table.sum()
    p_o = np.trace(table) / n
    p_e = float((table.sum(axis=1) * table.sum(axis=0)).sum()) / (n * n)
    if p_e >= 1.0:
        warnings.warn("kappa undefined: expected agreement is 1; returning 0.0", RuntimeWarning)
        return 0.0
    return float((p_o - p_e) / (1.0 - p_e))
