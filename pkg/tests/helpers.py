"""Shared test utilities: an independent label-propagation oracle and
finite-difference gradient checking."""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial.distance import cdist


def minimax_cost_matrix(D):
    """All-pairs bottleneck path costs via the Floyd-Warshall recurrence.

    cost(i, j) = min over paths of the max edge weight on the path. O(n^3),
    used only as a cross-check for small instances.
    """
    C = np.asarray(D, dtype=np.float64).copy()
    np.fill_diagonal(C, 0.0)
    n = C.shape[0]
    for k in range(n):
        np.minimum(C, np.maximum(C[:, k : k + 1], C[k : k + 1, :]), out=C)
    return C


def brute_force_propagate(coords, ids, proto_ids, proto_labels, runner_up="prototype"):
    """Reference propagation: exact minimax costs, lexicographic winners.

    Winner per node: the prototype minimizing (cost, prototype id).
    Runner-up: cheapest cost to a different prototype ("prototype" mode),
    or to a prototype of a different class ("class" mode); nan if no such
    prototype exists. Returns {id: (label, cost, runner_up, root_id)} for
    non-prototype ids.
    """
    coords = np.asarray(coords, dtype=np.float64)
    ids = np.asarray(ids, dtype=np.int64)
    D = cdist(coords, coords)
    C = minimax_cost_matrix(D)
    row = {int(s): i for i, s in enumerate(ids)}
    protos = sorted(zip([int(p) for p in proto_ids], [int(l) for l in proto_labels]))
    proto_set = {p for p, _ in protos}
    out = {}
    for sid in ids:
        sid = int(sid)
        if sid in proto_set:
            continue
        i = row[sid]
        best = min(protos, key=lambda pl: (C[i, row[pl[0]]], pl[0]))
        win_id, win_label = best
        cost = C[i, row[win_id]]
        if runner_up == "prototype":
            others = [C[i, row[p]] for p, _ in protos if p != win_id]
        else:
            others = [C[i, row[p]] for p, l in protos if l != win_label]
        rup = min(others) if others else math.nan
        out[sid] = (win_label, float(cost), float(rup), win_id)
    return out


def reference_confidence(cost, rup):
    if math.isnan(rup):
        return 1.0
    if cost == 0.0 and rup == 0.0:
        return 0.5
    return rup / (cost + rup)


def rel_err(a, b):
    a, b = float(a), float(b)
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def numeric_grad_at(f, tensors, name, flat_index, eps=1e-6):
    """Central finite difference of scalar f(tensors) in one coordinate."""
    t = tensors[name]
    orig = t.flat[flat_index]
    t.flat[flat_index] = orig + eps
    hi = f(tensors)
    t.flat[flat_index] = orig - eps
    lo = f(tensors)
    t.flat[flat_index] = orig
    return (hi - lo) / (2.0 * eps)


def sample_coordinates(tensors, count, rng):
    """(name, flat index) pairs sampled across all tensors."""
    names = sorted(tensors)
    sizes = np.asarray([tensors[n].size for n in names])
    total = int(sizes.sum())
    picks = rng.choice(total, size=min(count, total), replace=False)
    bounds = np.cumsum(sizes)
    out = []
    for p in sorted(int(v) for v in picks):
        which = int(np.searchsorted(bounds, p, side="right"))
        offset = p - (0 if which == 0 else int(bounds[which - 1]))
        out.append((names[which], offset))
    return out
