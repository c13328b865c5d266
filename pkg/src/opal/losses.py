"""Training losses: weighted pair-contrastive, supervised CE, pseudo-label CE.

The contrastive term sums, over every unordered pair of a labeled batch,

    (1 - y) * tau * 0.5 * D^2  +  y * 0.5 * max(0, margin - D)^2

where D is the Euclidean distance between the pair's contrastive-head
outputs, y = 0 for same-class pairs and 1 otherwise, and tau compensates
the class imbalance of random pairs: with m classes roughly 1/(m-1) of the
pairs are similar, so similar pairs get weight tau = m - 1.

The supervised and pseudo-label terms are both mean softmax cross-entropy;
they differ only in provenance (human labels on plain inputs vs exchanged
pseudo-labels on strongly perturbed inputs), which the caller arranges.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

__all__ = [
    "LossBreakdown",
    "contrastive_distance",
    "class_weight_tau",
    "contrastive_loss",
    "supervised_loss",
    "semisup_loss",
]


@dataclass(frozen=True)
class LossBreakdown:
    l_contrastive: float
    l_supervised: float
    l_semisup: float
    total: float

    @classmethod
    def build(cls, l_contrastive, l_supervised, l_semisup):
        # fixed accumulation order so total is reproducible to the bit
        total = (float(l_contrastive) + float(l_supervised)) + float(l_semisup)
        return cls(float(l_contrastive), float(l_supervised), float(l_semisup), total)


def contrastive_distance(z1, z2):
    """Euclidean distance between two contrastive-space vectors."""
    a = np.asarray(z1, dtype=np.float64).ravel()
    b = np.asarray(z2, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(((a - b) ** 2).sum()))


def class_weight_tau(num_classes):
    """Similar-pair weight; undefined for fewer than two classes."""
    m = int(num_classes)
    if m < 2:
        raise ValueError(f"need at least 2 classes, got {m}")
    return m - 1


def contrastive_loss(z, pairs, tau, margin=2.0):
    """Summed pair loss over contrastive embeddings `z` (a graph Var).

    `pairs` holds (y, row_a, row_b) triples indexing rows of z; build them
    with data.make_pairs and map ids to batch rows. Similar pairs (y=0) use
    the squared distance directly, so coincident members contribute zero
    loss and zero gradient; dissimilar pairs hinge at `margin`. An empty
    pair list yields a zero scalar and a warning.
    """
    z = ad.as_var(z)
    dtype = z.data.dtype
    if not pairs:
        warnings.warn("contrastive_loss got no pairs; returning zero", RuntimeWarning)
        return ad.Var(np.asarray(0.0, dtype=dtype))
    y = np.asarray([p[0] for p in pairs], dtype=dtype)
    ia = np.asarray([p[1] for p in pairs], dtype=np.intp)
    ib = np.asarray([p[2] for p in pairs], dtype=np.intp)
    za = ad.gather_rows(z, ia)
    zb = ad.gather_rows(z, ib)
    diff = ad.sub(za, zb)
    sq = ad.sum_rows(ad.mul(diff, diff))
    sim = ad.mul(sq, np.asarray((1.0 - y) * (0.5 * tau), dtype=dtype))
    dist = ad.safe_sqrt(sq)
    hinge = ad.relu(ad.sub(np.asarray(margin, dtype=dtype), dist))
    dis = ad.mul(ad.mul(hinge, hinge), np.asarray(0.5 * y, dtype=dtype))
    return ad.sum_all(ad.add(sim, dis))


def supervised_loss(logits, labels):
    """Mean cross-entropy of the classifier head against known labels."""
    return ad.softmax_cross_entropy_mean(logits, labels)


def semisup_loss(logits, pseudo_labels):
    """Mean cross-entropy against exchanged pseudo-labels.

    Identical arithmetic to supervised_loss; callers feed it logits of
    strongly augmented inputs and the partner network's pseudo-labels.
    Empty batches yield zero with a warning.
    """
    logits = ad.as_var(logits)
    if logits.data.shape[0] == 0:
        warnings.warn("semisup_loss got an empty batch; returning zero", RuntimeWarning)
        return ad.Var(np.asarray(0.0, dtype=logits.data.dtype))
    return ad.softmax_cross_entropy_mean(logits, pseudo_labels)
