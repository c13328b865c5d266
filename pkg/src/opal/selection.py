"""Confidence-driven selection: pseudo-label picks and oracle queries.

After each propagation, the top slice of every pseudo-class (highest
confidence, fixed fraction, at least one) becomes that network's
pseudo-label offering, and the k lowest-confidence points become its
active-query candidates. Candidates from both networks are merged, already
labeled ids dropped, and the cheapest-confidence survivors go to the
oracle, truncated so the total of oracle answers never exceeds its budget.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PseudoLabelSet",
    "ActiveQuery",
    "OracleTimeout",
    "NotPendingError",
    "LabelConflictError",
    "select_confident",
    "select_uncertain",
    "merge_active",
    "oracle_label",
    "SimulatedOracle",
    "InteractiveOracle",
]


class OracleTimeout(Exception):
    """No labels arrived in time; the run should pause, not crash."""


class NotPendingError(KeyError):
    """A label was posted for an id that is not awaiting annotation."""


class LabelConflictError(ValueError):
    """A label was re-posted with a different class than first recorded."""


@dataclass(frozen=True)
class PseudoLabelSet:
    source_network: int
    ids: np.ndarray
    labels: np.ndarray
    confidence: np.ndarray

    def __len__(self):
        return len(self.ids)

    def without(self, drop_ids):
        drop = set(int(s) for s in drop_ids)
        keep = [i for i, s in enumerate(self.ids) if int(s) not in drop]
        return PseudoLabelSet(
            self.source_network,
            self.ids[keep],
            self.labels[keep],
            self.confidence[keep],
        )


@dataclass(frozen=True)
class ActiveQuery:
    ids: np.ndarray  # ascending confidence
    confidence: np.ndarray
    budget: int


def select_confident(result, frac=0.10, source_network=0):
    """Per pseudo-class, the ceil(frac * class size) most confident picks.

    Ties on confidence break toward the lower id so selection is a pure
    function of the propagation result.
    """
    if not 0 < frac <= 1:
        raise ValueError(f"frac must be in (0, 1], got {frac}")
    ids, labels, conf = result.ids, result.pseudo_labels, result.confidence
    pick = []
    for c in np.unique(labels):
        rows = np.nonzero(labels == c)[0]
        quota = math.ceil(frac * len(rows))
        order = sorted(rows, key=lambda i: (-conf[i], ids[i]))
        pick.extend(order[:quota])
    pick.sort(key=lambda i: int(ids[i]))
    idx = np.asarray(pick, dtype=np.intp)
    return PseudoLabelSet(source_network, ids[idx].copy(), labels[idx].copy(), conf[idx].copy())


def select_uncertain(result, k):
    """The k least confident propagated points, ascending confidence."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    ids, conf = result.ids, result.confidence
    order = sorted(range(len(ids)), key=lambda i: (conf[i], ids[i]))[: min(k, len(ids))]
    idx = np.asarray(order, dtype=np.intp)
    return ActiveQuery(ids[idx].copy(), conf[idx].copy(), budget=int(k))


def merge_active(query_a, query_b, k, labeled_ids=()):
    """Union two candidate queries, keep min confidence per id, take k.

    Already labeled ids are excluded; the result is duplicate-free and
    ordered by ascending confidence with id tie-breaks.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    labeled = set(int(s) for s in labeled_ids)
    best = {}
    for q in (query_a, query_b):
        for sid, v in zip(q.ids, q.confidence):
            sid = int(sid)
            if sid in labeled:
                continue
            if sid not in best or v < best[sid]:
                best[sid] = float(v)
    order = sorted(best.items(), key=lambda kv: (kv[1], kv[0]))[:k]
    ids = np.asarray([sid for sid, _ in order], dtype=np.int64)
    conf = np.asarray([v for _, v in order], dtype=np.float64)
    return ActiveQuery(ids, conf, budget=int(k))


def oracle_label(query, oracle, store, c_active, n_active, meta=None):
    """Send a query to the oracle and commit its answers to the store.

    The query is truncated so c_active never exceeds n_active. Returns the
    ordered answers and the new c_active. OracleTimeout propagates so the
    caller can park the run in a resumable state.
    """
    room = int(n_active) - int(c_active)
    if room <= 0:
        return {}, int(c_active)
    take = [int(s) for s in query.ids[:room]]
    if not take:
        return {}, int(c_active)
    answers = oracle.label(take, meta=meta)
    ordered = {}
    for sid in take:
        y = int(answers[sid])
        store.mark_oracle(sid, y)
        ordered[sid] = y
    return ordered, int(c_active) + len(ordered)


class SimulatedOracle:
    """Answers instantly from the store's hidden ground truth."""

    answered_by = "simulated"

    def __init__(self, store):
        self._store = store

    def label(self, ids, meta=None):
        return {int(s): self._store.true_label(int(s)) for s in ids}

    def last_latency(self):
        return 0.0


class InteractiveOracle:
    """Blocks the training loop until a human (over HTTP) answers.

    Queries are keyed by epoch; answers are idempotent per (epoch, id).
    Re-posting the same label is a no-op acknowledgement, a different
    label for an already answered id is a conflict, and labels for ids
    outside the pending set are rejected.
    """

    answered_by = "api"

    def __init__(self, num_classes, timeout=None, poll_interval=0.05):
        self.num_classes = int(num_classes)
        self.timeout = timeout
        self.poll_interval = poll_interval
        self._cond = threading.Condition()
        self._epoch = None
        self._pending = {}
        self._answers = {}
        self._meta = []
        self._latency = 0.0

    def begin(self, epoch, ids, meta=None):
        # answers already recorded for this epoch (pause/resume re-issue)
        # are carried over so the query does not wait for them twice
        with self._cond:
            self._epoch = int(epoch)
            self._pending = {int(s): self._answers.get((int(epoch), int(s))) for s in ids}
            self._meta = meta or []
            self._cond.notify_all()

    def pending_view(self):
        with self._cond:
            if not self._pending:
                return {"query_epoch": self._epoch, "items": []}
            return {"query_epoch": self._epoch, "items": list(self._meta)}

    def submit(self, sample_id, label, query_epoch=None):
        sid = int(sample_id)
        if not isinstance(label, int) or isinstance(label, bool):
            raise ValueError(f"label must be an integer class index, got {label!r}")
        if not 0 <= label < self.num_classes:
            raise ValueError(f"label {label} out of range 0..{self.num_classes - 1}")
        with self._cond:
            epoch = self._epoch if query_epoch is None else int(query_epoch)
            key = (epoch, sid)
            if key in self._answers:
                if self._answers[key] == label:
                    return "noop"
                raise LabelConflictError(
                    f"id {sid} already answered with class {self._answers[key]} in query {epoch}"
                )
            if epoch != self._epoch or sid not in self._pending or self._pending[sid] is not None:
                raise NotPendingError(f"id {sid} is not pending annotation in query {epoch}")
            self._pending[sid] = label
            self._answers[key] = label
            self._cond.notify_all()
            return "accepted"

    def _all_answered(self):
        return self._pending and all(v is not None for v in self._pending.values())

    def label(self, ids, meta=None):
        start = time.monotonic()
        # a fresh call for the same pending epoch (resume path) keeps answers
        with self._cond:
            if self._epoch is None or set(self._pending) != set(int(s) for s in ids):
                raise RuntimeError("label() called without a matching begin()")
            deadline = None if self.timeout is None else start + self.timeout
            while not self._all_answered():
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    raise OracleTimeout(f"no complete answer after {self.timeout}s")
                self._cond.wait(self.poll_interval if remaining is None else min(self.poll_interval, remaining))
            out = {sid: int(v) for sid, v in self._pending.items()}
            self._pending = {}
            self._meta = []
            self._latency = time.monotonic() - start
            return out

    def last_latency(self):
        return self._latency
