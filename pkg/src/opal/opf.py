"""Optimum-path label propagation over a 2D projection.

Every labeled point (prototype) competes to conquer each unlabeled point
along paths of the complete Euclidean graph; a path's cost is its largest
edge (minimax). An unlabeled point takes the label of the prototype that
reaches it with the smallest such cost, and its confidence weighs the
winning cost c against the best cost c' from a competing prototype:

    v = c' / (c + c')            in [0.5, 1.0]

Minimax path costs on a complete graph live on the minimum spanning tree:
the cost between two nodes is exactly the weight at which they first join
in an ascending-weight merge of MST edges. We build the MST with a
priority-queue scan (extract the cheapest frontier node, relax its edges)
and then sweep the edges in ascending weight groups with a union-find,
assigning each unlabeled node its winning cost the moment its component
first holds a prototype. Processing equal-weight edges as one group makes
tie handling exact: prototypes that arrive at the same cost are compared
directly and the lowest prototype id wins, matching a brute-force oracle
even on constructed coincident-point cases (a plain label-setting pass
does not; see the decision ledger).

Runner-up costs fall out of the same sweep: c'(u) is the group weight at
which u's component first gains a prototype other than u's root (flag
``runner_up="prototype"``) or one of a different class (``"class"``). With
a single prototype (or a single class) the runner-up is undefined and the
confidence is pinned to 1.0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "PrototypeSet",
    "PropagationResult",
    "propagate",
    "confidence",
    "confidence_vector",
    "runner_up_costs",
    "write_propagation_csv",
]


@dataclass(frozen=True)
class PrototypeSet:
    ids: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", np.asarray(self.ids, dtype=np.int64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        if len(self.ids) == 0:
            raise ValueError("prototype set must not be empty")
        if self.ids.shape != self.labels.shape:
            raise ValueError("prototype ids and labels disagree")
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("duplicate prototype ids")


@dataclass
class PropagationResult:
    ids: np.ndarray
    pseudo_labels: np.ndarray
    costs: np.ndarray
    runner_up: np.ndarray  # nan where undefined
    confidence: np.ndarray
    roots: np.ndarray
    runner_up_mode: str = "prototype"

    def __len__(self):
        return len(self.ids)


def confidence(cost, runner_up):
    """Confidence of one propagated label; runner_up may be None/nan."""
    c = float(cost)
    if c < 0:
        raise ValueError(f"negative path cost {c}")
    if runner_up is None or (isinstance(runner_up, float) and math.isnan(runner_up)):
        return 1.0
    cp = float(runner_up)
    if math.isnan(cp):
        return 1.0
    if cp < c:
        raise ValueError(f"runner-up cost {cp} below winning cost {c}")
    if c == 0.0 and cp == 0.0:
        return 0.5
    return cp / (c + cp)


def confidence_vector(costs, runner_up):
    out = np.empty(len(costs), dtype=np.float64)
    for i in range(len(costs)):
        out[i] = confidence(costs[i], runner_up[i])
    return out


class _DSU:
    __slots__ = ("parent", "size")

    def __init__(self, n):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x):
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra


class _Comp:
    __slots__ = ("n_protos", "best_sid", "best_label", "classes", "waiting", "half")

    def __init__(self):
        self.n_protos = 0
        self.best_sid = None
        self.best_label = None
        self.classes = set()
        self.waiting = []
        self.half = []

    def absorb(self, other):
        self.n_protos += other.n_protos
        if other.best_sid is not None and (self.best_sid is None or other.best_sid < self.best_sid):
            self.best_sid = other.best_sid
            self.best_label = other.best_label
        self.classes |= other.classes
        self.waiting.extend(other.waiting)
        self.half.extend(other.half)


def _mst_edges(D):
    """Prim scan: repeatedly extract the cheapest frontier node and relax."""
    n = D.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best_w = D[0].astype(np.float64).copy()
    best_from = np.zeros(n, dtype=np.intp)
    best_w[0] = np.inf
    edges = []
    for _ in range(n - 1):
        u = int(np.argmin(best_w))
        edges.append((int(best_from[u]), u, float(best_w[u])))
        in_tree[u] = True
        row = D[u].astype(np.float64)
        closer = (row < best_w) & ~in_tree
        best_w[closer] = row[closer]
        best_from[closer] = u
        best_w[u] = np.inf
    return edges


def propagate(coords, ids, prototypes, runner_up="prototype"):
    """Assign every non-prototype point a label, cost and confidence."""
    if runner_up not in ("prototype", "class"):
        raise ValueError(f"runner_up must be 'prototype' or 'class', got {runner_up!r}")
    coords = np.asarray(coords, dtype=np.float64)
    ids = np.asarray(ids, dtype=np.int64)
    if coords.ndim != 2 or coords.shape[0] != len(ids):
        raise ValueError("coords must be (n, k) aligned with ids")
    if not np.isfinite(coords).all():
        raise ValueError("non-finite coordinates")
    n = len(ids)
    id_to_row = {int(s): i for i, s in enumerate(ids)}
    proto_rows = []
    for sid in prototypes.ids:
        if int(sid) not in id_to_row:
            raise ValueError(f"prototype id {int(sid)} not covered by the projection")
        proto_rows.append(id_to_row[int(sid)])
    proto_rows = np.asarray(proto_rows, dtype=np.intp)
    is_proto = np.zeros(n, dtype=bool)
    is_proto[proto_rows] = True
    proto_label_of_row = {}
    for sid, lab in zip(prototypes.ids, prototypes.labels):
        proto_label_of_row[id_to_row[int(sid)]] = int(lab)

    cost = np.full(n, np.nan)
    rup = np.full(n, np.nan)
    root_sid = np.full(n, -1, dtype=np.int64)
    root_lab = np.full(n, -1, dtype=np.int64)
    node_root_class = np.full(n, -1, dtype=np.int64)

    unassigned = int(n - is_proto.sum())
    if unassigned == 0:
        empty = np.asarray([], dtype=np.int64)
        return PropagationResult(empty, empty.copy(), np.asarray([]), np.asarray([]), np.asarray([]), empty.copy(), runner_up)

    D = cdist(coords, coords)
    edges = sorted(_mst_edges(D), key=lambda e: e[2]) if n > 1 else []

    dsu = _DSU(n)
    comps = {}
    for i in range(n):
        c = _Comp()
        if is_proto[i]:
            c.n_protos = 1
            c.best_sid = int(ids[i])
            c.best_label = proto_label_of_row[i]
            c.classes.add(proto_label_of_row[i])
        else:
            c.waiting.append(i)
        comps[i] = c

    by_class = runner_up == "class"

    def resolve(r, w):
        comp = comps[r]
        if comp.n_protos == 0:
            return
        second = comp.n_protos >= 2 if not by_class else len(comp.classes) >= 2
        if comp.waiting:
            for node in comp.waiting:
                cost[node] = w
                root_sid[node] = comp.best_sid
                root_lab[node] = comp.best_label
                node_root_class[node] = comp.best_label
                if second:
                    rup[node] = w
                else:
                    comp.half.append(node)
            comp.waiting = []
        if comp.half:
            if not by_class:
                if comp.n_protos >= 2:
                    for node in comp.half:
                        rup[node] = w
                    comp.half = []
            else:
                keep = []
                for node in comp.half:
                    if any(c != node_root_class[node] for c in comp.classes):
                        rup[node] = w
                    else:
                        keep.append(node)
                comp.half = keep

    i = 0
    while i < len(edges):
        w = edges[i][2]
        touched = []
        j = i
        while j < len(edges) and edges[j][2] == w:
            a, b = edges[j][0], edges[j][1]
            ra, rb = dsu.find(a), dsu.find(b)
            if ra != rb:
                r = dsu.union(ra, rb)
                other = rb if r == ra else ra
                comps[r].absorb(comps.pop(other))
                touched.append(r)
            else:
                touched.append(ra)
            j += 1
        for r in {dsu.find(x) for x in touched}:
            resolve(r, w)
        i = j

    rows = np.asarray([i for i in range(n) if not is_proto[i]], dtype=np.intp)
    out_cost = cost[rows]
    if np.isnan(out_cost).any():
        raise RuntimeError("propagation left nodes unassigned; graph sweep incomplete")
    conf = confidence_vector(out_cost, rup[rows])
    return PropagationResult(
        ids=ids[rows],
        pseudo_labels=root_lab[rows],
        costs=out_cost,
        runner_up=rup[rows],
        confidence=conf,
        roots=root_sid[rows],
        runner_up_mode=runner_up,
    )


def runner_up_costs(coords, ids, prototypes, forest=None, runner_up="prototype"):
    """Second-best path costs from a prototype other than each node's root.

    Re-derives the sweep; when `forest` (a prior PropagationResult) is
    given, its roots are cross-checked so the runner-up series can't drift
    from the forest it annotates.
    """
    result = propagate(coords, ids, prototypes, runner_up=runner_up)
    if forest is not None:
        if not np.array_equal(forest.ids, result.ids) or not np.array_equal(forest.roots, result.roots):
            raise ValueError("forest does not match this projection/prototype pair")
    return result.runner_up


def write_propagation_csv(result, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "pseudo_label", "cost", "runner_up", "confidence", "root"])
        for i in range(len(result)):
            r = result.runner_up[i]
            writer.writerow(
                [
                    int(result.ids[i]),
                    int(result.pseudo_labels[i]),
                    repr(float(result.costs[i])),
                    "" if math.isnan(r) else repr(float(r)),
                    repr(float(result.confidence[i])),
                    int(result.roots[i]),
                ]
            )
