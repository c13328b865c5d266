"""Datasets, label bookkeeping, splits, batching and augmentation.

A `Dataset` is a fixed table of feature vectors with hidden ground-truth
labels. During a run the engine only sees what the `LabelStore` exposes:
seed labels, oracle answers and per-interval pseudo-labels. Ground truth
stays private to the simulated oracle and the final evaluator.

File formats:

* feature CSV with header ``id,label,f0..f{d-1}``
* packed binary matrix: magic ``OPAL1``, little-endian u32 n, d, m,
  then n records of d float32 features followed by one int32 label
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dataset",
    "Sample",
    "LabelStore",
    "SplitPlan",
    "FoldSplit",
    "AugmentPolicy",
    "WEAK_POLICY",
    "STRONG_POLICY",
    "DatasetError",
    "LabelStateError",
    "load_dataset",
    "write_feature_csv",
    "write_binary_matrix",
    "stratified_split",
    "strong_augment",
    "augment_batch",
    "make_pairs",
    "make_blob_dataset",
]

UNLABELED = "unlabeled"
SEED = "seed"
ORACLE = "oracle"
PSEUDO = "pseudo"

BINARY_MAGIC = b"OPAL1"


class DatasetError(ValueError):
    """Raised for malformed dataset files or impossible split requests."""


class LabelStateError(ValueError):
    """Raised when a label transition would violate monotonicity."""


@dataclass(frozen=True)
class Sample:
    id: int
    features: np.ndarray
    payload_ref: str | None = None


class Dataset:
    """Immutable feature table with hidden ground-truth labels."""

    def __init__(self, ids, features, labels, num_classes, payload_refs=None):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.features = np.ascontiguousarray(features, dtype=np.float32)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.num_classes = int(num_classes)
        self.payload_refs = payload_refs
        if self.features.ndim != 2:
            raise DatasetError("features must be a 2D matrix")
        n = self.features.shape[0]
        if not (len(self.ids) == len(self.labels) == n):
            raise DatasetError("ids, features and labels disagree on sample count")
        if len(np.unique(self.ids)) != n:
            raise DatasetError("sample ids must be unique")
        present = np.unique(self.labels)
        expected = np.arange(self.num_classes)
        if len(present) != self.num_classes or not np.array_equal(present, expected):
            raise DatasetError(
                f"class labels must be contiguous 0..{self.num_classes - 1} with every class present, got {present.tolist()}"
            )
        self._index = {int(sid): i for i, sid in enumerate(self.ids)}

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def row_of(self, sample_id):
        return self._index[int(sample_id)]

    def features_for(self, sample_ids):
        rows = [self._index[int(s)] for s in sample_ids]
        return self.features[rows]

    def sample(self, sample_id):
        i = self._index[int(sample_id)]
        ref = self.payload_refs[i] if self.payload_refs is not None else None
        return Sample(int(self.ids[i]), self.features[i], ref)


def load_dataset(path, format="csv", fold_count=3):
    """Read a dataset file; `format` is "csv" or "binary".

    The fold_count guard rejects sets too small for the reference
    cross-validation protocol (needs at least fold_count samples per class
    overall, i.e. n >= fold_count * num_classes).
    """
    if format == "csv":
        ds = _load_csv(path)
    elif format == "binary":
        ds = _load_binary(path)
    else:
        raise DatasetError(f"unknown dataset format {format!r}")
    if ds.n < fold_count * ds.num_classes:
        raise DatasetError(
            f"dataset too small: n={ds.n} < fold_count*num_classes={fold_count * ds.num_classes}"
        )
    return ds


def _load_csv(path):
    try:
        fh = open(path, "r", newline="")
    except FileNotFoundError:
        raise DatasetError(f"dataset file not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError("empty dataset file") from None
        if len(header) < 3 or header[0] != "id" or header[1] != "label":
            raise DatasetError("header must be id,label,f0..f{d-1}")
        d = len(header) - 2
        expected = [f"f{j}" for j in range(d)]
        if header[2:] != expected:
            raise DatasetError("feature columns must be named f0..f{d-1} in order")
        ids, labels, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise DatasetError(f"ragged row at line {lineno}: expected {d + 2} fields, got {len(row)}")
            try:
                ids.append(int(row[0]))
                labels.append(int(row[1]))
                rows.append([float(v) for v in row[2:]])
            except ValueError as exc:
                raise DatasetError(f"bad value at line {lineno}: {exc}") from None
    if not rows:
        raise DatasetError("dataset has no samples")
    labels_arr = np.asarray(labels, dtype=np.int64)
    if labels_arr.min() < 0:
        raise DatasetError("negative class label")
    m = int(labels_arr.max()) + 1
    return Dataset(ids, np.asarray(rows, dtype=np.float32), labels_arr, m)


def _load_binary(path):
    try:
        fh = open(path, "rb")
    except FileNotFoundError:
        raise DatasetError(f"dataset file not found: {path}") from None
    with fh:
        blob = fh.read()
    if len(blob) < len(BINARY_MAGIC) + 12:
        raise DatasetError("binary matrix truncated")
    if blob[: len(BINARY_MAGIC)] != BINARY_MAGIC:
        raise DatasetError("bad magic, not a binary matrix file")
    n, d, m = struct.unpack_from("<III", blob, len(BINARY_MAGIC))
    record = d * 4 + 4
    expected = len(BINARY_MAGIC) + 12 + n * record
    if len(blob) != expected:
        raise DatasetError(f"binary matrix size mismatch: expected {expected} bytes, got {len(blob)}")
    body = np.frombuffer(blob, dtype=np.uint8, offset=len(BINARY_MAGIC) + 12)
    body = body.reshape(n, record)
    features = body[:, : d * 4].copy().view("<f4").reshape(n, d)
    labels = body[:, d * 4 :].copy().view("<i4").reshape(n).astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= m):
        raise DatasetError("label out of declared class range")
    return Dataset(np.arange(n), features, labels, m)


def write_feature_csv(dataset, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label"] + [f"f{j}" for j in range(dataset.d)])
        for i in range(dataset.n):
            writer.writerow(
                [int(dataset.ids[i]), int(dataset.labels[i])]
                + [repr(float(v)) for v in dataset.features[i]]
            )


def write_binary_matrix(dataset, path):
    buf = io.BytesIO()
    buf.write(BINARY_MAGIC)
    buf.write(struct.pack("<III", dataset.n, dataset.d, dataset.num_classes))
    for i in range(dataset.n):
        buf.write(dataset.features[i].astype("<f4").tobytes())
        buf.write(struct.pack("<i", int(dataset.labels[i])))
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


class LabelStore:
    """Tracks the annotation state of every sample in the training split.

    States: unlabeled, seed, oracle, pseudo. Seed and oracle labels are
    monotone (never downgraded or overwritten); pseudo-labels are fully
    replaced at every propagation interval. Ground truth is kept private:
    only `true_label` exposes it, and that accessor exists for the
    simulated oracle and the final evaluator.
    """

    def __init__(self, ids, true_labels, num_classes):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.num_classes = int(num_classes)
        self._truth = {int(s): int(y) for s, y in zip(self.ids, np.asarray(true_labels))}
        self._kind = {int(s): UNLABELED for s in self.ids}
        self._label = {}
        self._conf = {}

    def _check(self, sample_id, label=None):
        sid = int(sample_id)
        if sid not in self._kind:
            raise KeyError(f"unknown sample id {sid}")
        if label is not None and not (0 <= int(label) < self.num_classes):
            raise ValueError(f"label {label} out of range for {self.num_classes} classes")
        return sid

    def kind(self, sample_id):
        return self._kind[self._check(sample_id)]

    def label(self, sample_id):
        return self._label.get(self._check(sample_id))

    def confidence(self, sample_id):
        return self._conf.get(self._check(sample_id))

    def mark_seed(self, sample_id, label):
        sid = self._check(sample_id, label)
        if self._kind[sid] in (SEED, ORACLE):
            raise LabelStateError(f"sample {sid} already {self._kind[sid]}-labeled")
        self._kind[sid] = SEED
        self._label[sid] = int(label)
        self._conf.pop(sid, None)

    def mark_oracle(self, sample_id, label):
        sid = self._check(sample_id, label)
        if self._kind[sid] in (SEED, ORACLE):
            raise LabelStateError(f"sample {sid} already {self._kind[sid]}-labeled")
        self._kind[sid] = ORACLE
        self._label[sid] = int(label)
        self._conf.pop(sid, None)

    def set_pseudo(self, sample_id, label, confidence):
        sid = self._check(sample_id, label)
        if self._kind[sid] in (SEED, ORACLE):
            raise LabelStateError(f"cannot pseudo-label {self._kind[sid]}-labeled sample {sid}")
        self._kind[sid] = PSEUDO
        self._label[sid] = int(label)
        self._conf[sid] = float(confidence)

    def clear_pseudo(self):
        for sid, kind in self._kind.items():
            if kind == PSEUDO:
                self._kind[sid] = UNLABELED
                self._label.pop(sid, None)
                self._conf.pop(sid, None)

    def labeled_ids(self):
        """Seed plus oracle ids, ascending."""
        out = [sid for sid, k in self._kind.items() if k in (SEED, ORACLE)]
        return np.asarray(sorted(out), dtype=np.int64)

    def unlabeled_ids(self):
        """Everything not seed/oracle labeled (pseudo included), ascending."""
        out = [sid for sid, k in self._kind.items() if k not in (SEED, ORACLE)]
        return np.asarray(sorted(out), dtype=np.int64)

    def counts(self):
        c = {UNLABELED: 0, SEED: 0, ORACLE: 0, PSEUDO: 0}
        for k in self._kind.values():
            c[k] += 1
        return c

    def true_label(self, sample_id):
        """Ground truth. For the simulated oracle and final evaluation only."""
        return self._truth[self._check(sample_id)]

    def dump(self):
        return {
            "kind": {str(s): k for s, k in self._kind.items()},
            "label": {str(s): v for s, v in self._label.items()},
            "conf": {str(s): v for s, v in self._conf.items()},
        }

    def restore(self, blob):
        self._kind = {int(s): k for s, k in blob["kind"].items()}
        self._label = {int(s): int(v) for s, v in blob["label"].items()}
        self._conf = {int(s): float(v) for s, v in blob["conf"].items()}


@dataclass
class FoldSplit:
    train_ids: np.ndarray
    test_ids: np.ndarray
    seed_ids: np.ndarray


@dataclass
class SplitPlan:
    seed: int
    fold_count: int
    labeled_frac: float
    folds: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(
            {
                "seed": self.seed,
                "fold_count": self.fold_count,
                "labeled_frac": self.labeled_frac,
                "folds": [
                    {
                        "train_ids": f.train_ids.tolist(),
                        "test_ids": f.test_ids.tolist(),
                        "seed_ids": f.seed_ids.tolist(),
                    }
                    for f in self.folds
                ],
            }
        )

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        plan = cls(int(raw["seed"]), int(raw["fold_count"]), float(raw["labeled_frac"]))
        for f in raw["folds"]:
            plan.folds.append(
                FoldSplit(
                    np.asarray(f["train_ids"], dtype=np.int64),
                    np.asarray(f["test_ids"], dtype=np.int64),
                    np.asarray(f["seed_ids"], dtype=np.int64),
                )
            )
        return plan


def stratified_split(dataset, fold_count=3, labeled_frac=0.01, seed=0):
    """Stratified k-fold test splits plus per-fold seed label draws.

    Test folds are dealt per class so every fold size stays within +-1 of
    n/fold_count. Seed quotas are per-class ceilings, quota_c =
    ceil(labeled_frac * n_c), computed on whole-dataset class sizes; the
    paper-scale counts (36/56/100 at 1%) land exactly on this rule.
    """
    if fold_count < 2:
        raise DatasetError("fold_count must be at least 2")
    n, m = dataset.n, dataset.num_classes
    if labeled_frac * n < m:
        raise DatasetError(
            f"labeled budget {labeled_frac * n:.2f} smaller than class count {m}"
        )
    rng = np.random.default_rng(seed)
    by_class = {c: dataset.ids[dataset.labels == c].copy() for c in range(m)}
    quotas = {c: max(1, math.ceil(labeled_frac * len(by_class[c]))) for c in range(m)}

    # deal each class into folds, sending remainders to the currently
    # smallest folds so overall sizes stay within one of each other
    fold_test = [[] for _ in range(fold_count)]
    totals = np.zeros(fold_count, dtype=np.int64)
    for c in range(m):
        ids = by_class[c]
        perm = ids[rng.permutation(len(ids))]
        base = len(ids) // fold_count
        extra = len(ids) % fold_count
        order = np.lexsort((np.arange(fold_count), totals))
        counts = np.full(fold_count, base, dtype=np.int64)
        counts[order[:extra]] += 1
        start = 0
        for k in range(fold_count):
            fold_test[k].extend(int(v) for v in perm[start : start + counts[k]])
            start += counts[k]
        totals += counts

    plan = SplitPlan(seed=int(seed), fold_count=fold_count, labeled_frac=float(labeled_frac))
    all_ids = set(int(v) for v in dataset.ids)
    for k in range(fold_count):
        test_ids = np.asarray(sorted(fold_test[k]), dtype=np.int64)
        train_ids = np.asarray(sorted(all_ids - set(fold_test[k])), dtype=np.int64)
        train_set = set(int(v) for v in train_ids)
        seed_ids = []
        for c in range(m):
            pool = np.asarray([int(v) for v in by_class[c] if int(v) in train_set], dtype=np.int64)
            if len(pool) < quotas[c]:
                raise DatasetError(
                    f"class {c} has only {len(pool)} training samples in fold {k}, "
                    f"needs {quotas[c]} seed labels"
                )
            pick = rng.permutation(len(pool))[: quotas[c]]
            seed_ids.extend(int(pool[i]) for i in pick)
        plan.folds.append(
            FoldSplit(train_ids, test_ids, np.asarray(sorted(seed_ids), dtype=np.int64))
        )
    return plan


@dataclass(frozen=True)
class AugmentPolicy:
    """Feature-space perturbation magnitudes; all zero means identity."""

    jitter_sigma: float = 0.0
    mask_frac: float = 0.0
    scale_jitter: float = 0.0


WEAK_POLICY = AugmentPolicy(jitter_sigma=0.05)
STRONG_POLICY = AugmentPolicy(jitter_sigma=0.1, mask_frac=0.125, scale_jitter=0.1)


def strong_augment(features, policy, rng):
    """Perturb one feature vector: jitter, then mask, then scale.

    Masking zeroes exactly floor(mask_frac * d) coordinates chosen without
    replacement. Zero-magnitude policies draw nothing from rng, so the
    identity case is exact.
    """
    x = np.asarray(features, dtype=np.float32).copy()
    d = x.shape[-1]
    if policy.jitter_sigma > 0:
        x = x + rng.normal(0.0, policy.jitter_sigma, size=d).astype(np.float32)
    k = int(policy.mask_frac * d)
    if policy.mask_frac > 0 and k > 0:
        idx = rng.choice(d, size=k, replace=False)
        x[idx] = 0.0
    if policy.scale_jitter > 0:
        x = x * np.float32(1.0 + rng.uniform(-policy.scale_jitter, policy.scale_jitter))
    return x


def augment_batch(features, policy, rng):
    """Row-wise strong_augment over a batch; rows perturbed independently."""
    X = np.asarray(features, dtype=np.float32)
    return np.stack([strong_augment(X[i], policy, rng) for i in range(X.shape[0])])


def make_pairs(batch_ids, store):
    """All unordered pairs of a labeled batch with similarity targets.

    Returns (y, id_a, id_b) triples: y = 0 for same-class pairs,
    1 for different-class. Every batch member must carry a seed or oracle
    label; pseudo-labels do not qualify.
    """
    ids = [int(s) for s in batch_ids]
    for sid in ids:
        if store.kind(sid) not in (SEED, ORACLE):
            raise LabelStateError(f"sample {sid} is not labeled; contrastive pairs need labels")
    pairs = []
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            same = store.label(ids[i]) == store.label(ids[j])
            pairs.append((0 if same else 1, ids[i], ids[j]))
    return pairs


def make_blob_dataset(n=1200, d=16, num_classes=4, seed=0, center_scale=1.5, within_sigma=1.0):
    """Gaussian class blobs for desk-scale runs; labels are blob identity."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, center_scale, size=(num_classes, d))
    base = n // num_classes
    sizes = [base + (1 if c < n % num_classes else 0) for c in range(num_classes)]
    feats, labels = [], []
    for c in range(num_classes):
        feats.append(centers[c] + rng.normal(0.0, within_sigma, size=(sizes[c], d)))
        labels.extend([c] * sizes[c])
    features = np.vstack(feats).astype(np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    perm = rng.permutation(n)
    return Dataset(np.arange(n), features[perm], labels[perm], num_classes)
