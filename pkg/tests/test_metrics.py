"""Accuracy and chance-corrected agreement."""

import numpy as np
import pytest

from opal.metrics import accuracy, cohens_kappa


def _from_confusion(table):
    """Expand a confusion matrix into (true, predicted) label arrays."""
    t, p = [], []
    for i, row in enumerate(table):
        for j, count in enumerate(row):
            t.extend([i] * count)
            p.extend([j] * count)
    return np.asarray(t), np.asarray(p)


def test_kappa_frozen_example():
    # marginals 50/50 vs 60/40, observed agreement 0.8, expected 0.5
    t, p = _from_confusion([[45, 5], [15, 35]])
    assert cohens_kappa(t, p, 2) == pytest.approx(0.6, abs=1e-12)


def test_kappa_perfect_and_chance():
    y = np.asarray([0, 1, 2, 0, 1, 2])
    assert cohens_kappa(y, y, 3) == pytest.approx(1.0)
    # statistically independent prediction has kappa near zero
    t, p = _from_confusion([[25, 25], [25, 25]])
    assert cohens_kappa(t, p, 2) == pytest.approx(0.0, abs=1e-12)


def test_kappa_degenerate_marginals_warn():
    y = np.zeros(10, dtype=int)
    with pytest.warns(RuntimeWarning):
        assert cohens_kappa(y, y, 1) == 0.0


def test_kappa_worse_than_chance_is_negative():
    t = np.asarray([0, 0, 1, 1])
    p = np.asarray([1, 1, 0, 0])
    assert cohens_kappa(t, p, 2) < 0


def test_accuracy():
    assert accuracy([1, 2, 3], [1, 2, 0]) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        accuracy([], [])
    with pytest.raises(ValueError):
        accuracy([1, 2], [1])
