"""Exact t-SNE for periodic 2D projection of the latent space.

Deliberately the O(n^2) variant: projections here feed a graph-based
label propagation whose behavior must be reproducible and easy to reason
about, and the working sets are desk scale (hundreds to a few thousand
points). No tree approximations, no silent fallbacks.

Conditional affinities use a per-row bandwidth found by bisection so the
Shannon entropy of p(j|i) hits log2(perplexity) to within 1e-5 bits; the
joint matrix is the symmetrized average. The embedding runs plain gradient
descent with momentum 0.5 (0.8 after `momentum_switch` iterations) and
early exaggeration for the first `ee_iters` iterations. KL divergence is
tracked against the un-exaggerated affinities and must end below where it
started.

Duplicate feature rows make conditional affinities ill-posed; we fail
loudly with the offending ids instead of jittering behind the caller's
back. Callers that can tolerate jitter apply it themselves.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "AffinityMatrix",
    "Projection2D",
    "DegenerateRowError",
    "NonFiniteGradientError",
    "pairwise_affinities",
    "tsne_embed",
    "kl_divergence",
    "kl_gradient",
    "project",
]


class DegenerateRowError(ValueError):
    """Two distinct ids share identical features; affinities are ill-posed."""

    def __init__(self, pairs):
        self.pairs = pairs
        shown = ", ".join(f"({a}, {b})" for a, b in pairs[:8])
        more = "" if len(pairs) <= 8 else f" and {len(pairs) - 8} more"
        super().__init__(f"identical feature rows for id pairs: {shown}{more}")


class NonFiniteGradientError(RuntimeError):
    """Embedding gradient went non-finite; diverged instead of converged."""


@dataclass
class AffinityMatrix:
    P: np.ndarray
    perplexity: float
    sigmas: np.ndarray
    entropy_bits: np.ndarray


@dataclass
class Projection2D:
    coords: np.ndarray
    kl_history: list = field(default_factory=list)
    kl_iterations: list = field(default_factory=list)
    seed: int = 0


def _duplicate_pairs(d2, ids):
    ii, jj = np.nonzero(d2 <= 0.0)
    pairs = []
    for i, j in zip(ii.tolist(), jj.tolist()):
        if i < j:
            a = ids[i] if ids is not None else i
            b = ids[j] if ids is not None else j
            pairs.append((a, b))
    return pairs


def pairwise_affinities(features, perplexity=50.0, tol_bits=1e-5, max_iter=100, ids=None, dtype=np.float64):
    """Symmetrized joint affinity matrix with entropy-calibrated bandwidths."""
    X = np.asarray(features, dtype=dtype)
    n = X.shape[0]
    if n < 3:
        raise ValueError(f"need at least 3 points, got {n}")
    target = float(perplexity)
    if target >= n - 1:
        clamped = float(n - 2)
        warnings.warn(
            f"perplexity {target} too large for n={n}; clamped to {clamped}", RuntimeWarning
        )
        target = clamped
    if target < 1.0:
        raise ValueError(f"perplexity must be at least 1, got {target}")

    d2 = cdist(X, X, metric="sqeuclidean").astype(dtype)
    np.fill_diagonal(d2, np.inf)
    dup = _duplicate_pairs(d2, ids)
    if dup:
        raise DegenerateRowError(dup)

    # shift each row by its minimum so exp never underflows to an all-zero row
    shift = d2.min(axis=1, keepdims=True)
    d2s = d2 - shift
    target_nats = np.log(target)
    tol_nats = tol_bits * np.log(2.0)

    beta = np.ones(n, dtype=dtype)
    lo = np.zeros(n, dtype=dtype)
    hi = np.full(n, np.inf, dtype=dtype)
    P = np.zeros_like(d2s)
    H = np.zeros(n, dtype=dtype)
    for _ in range(max_iter):
        np.exp(-d2s * beta[:, None], out=P)
        np.fill_diagonal(P, 0.0)
        rows = P.sum(axis=1)
        P /= rows[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = np.where(P > 0, np.log(P), 0.0)
        H = -(P * logp).sum(axis=1)
        diff = H - target_nats
        if np.all(np.abs(diff) <= tol_nats):
            break
        too_high = diff > 0  # entropy above target: tighten the kernel
        lo = np.where(too_high, beta, lo)
        hi = np.where(too_high, hi, beta)
        beta = np.where(
            too_high,
            np.where(np.isinf(hi), beta * 2.0, (lo + hi) / 2.0),
            (lo + hi) / 2.0,
        )
    else:
        # exhausted without meeting tol everywhere (possible for rows whose
        # entropy is pinned by symmetry); refresh P for the final beta
        np.exp(-d2s * beta[:, None], out=P)
        np.fill_diagonal(P, 0.0)
        P /= P.sum(axis=1)[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = np.where(P > 0, np.log(P), 0.0)
        H = -(P * logp).sum(axis=1)

    joint = (P + P.T) / (2.0 * n)
    sigmas = np.sqrt(1.0 / (2.0 * beta))
    return AffinityMatrix(P=joint, perplexity=target, sigmas=sigmas, entropy_bits=H / np.log(2.0))


def kl_divergence(P, Y):
    """KL(P || Q) where Q is the Student-t kernel of embedding Y."""
    P = P.P if isinstance(P, AffinityMatrix) else np.asarray(P)
    Y = np.asarray(Y)
    d2 = cdist(Y, Y, metric="sqeuclidean")
    num = 1.0 / (1.0 + d2)
    np.fill_diagonal(num, 0.0)
    Q = num / num.sum()
    mask = P > 0
    Qc = np.maximum(Q, np.finfo(float).tiny)
    return float((P[mask] * np.log(P[mask] / Qc[mask])).sum())


def kl_gradient(P, Y):
    """Analytic dKL/dY: 4 * sum_j (P-Q)_ij * num_ij * (y_i - y_j)."""
    P = P.P if isinstance(P, AffinityMatrix) else np.asarray(P)
    Y = np.asarray(Y)
    d2 = cdist(Y, Y, metric="sqeuclidean")
    num = 1.0 / (1.0 + d2)
    np.fill_diagonal(num, 0.0)
    Q = num / num.sum()
    W = (P - Q) * num
    return 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)


def tsne_embed(
    affinities,
    iters=1000,
    seed=0,
    lr_embed=200.0,
    early_exaggeration=12.0,
    ee_iters=250,
    momentum_switch=250,
    kl_every=1,
    dtype=np.float64,
):
    """Gradient-descend a 2D embedding of a joint affinity matrix."""
    P = affinities.P if isinstance(affinities, AffinityMatrix) else np.asarray(affinities)
    P = P.astype(dtype, copy=False)
    n = P.shape[0]
    if iters < 1:
        raise ValueError("iters must be positive")
    rng = np.random.default_rng(seed)
    Y = (rng.standard_normal((n, 2)) * 1e-4).astype(dtype)
    velocity = np.zeros_like(Y)
    kl_history, kl_iterations = [], []
    lr = np.asarray(lr_embed, dtype=Y.dtype)

    sum_trick = np.empty(n, dtype=Y.dtype)
    for it in range(iters):
        factor = Y.dtype.type(early_exaggeration if it < ee_iters else 1.0)
        momentum = Y.dtype.type(0.5 if it < momentum_switch else 0.8)
        np.einsum("ij,ij->i", Y, Y, out=sum_trick)
        d2 = sum_trick[:, None] + sum_trick[None, :] - 2.0 * (Y @ Y.T)
        num = 1.0 / (1.0 + np.maximum(d2, 0.0))
        np.fill_diagonal(num, 0.0)
        z = num.sum()
        Q = num / z
        if it % kl_every == 0:
            mask = P > 0
            Qc = np.maximum(Q, np.finfo(dtype).tiny)
            kl_history.append(float((P[mask] * np.log(P[mask] / Qc[mask])).sum()))
            kl_iterations.append(it)
        W = (factor * P - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        if not np.isfinite(grad).all():
            raise NonFiniteGradientError(f"non-finite embedding gradient at iteration {it}")
        velocity = momentum * velocity - lr * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)

    kl_history.append(kl_divergence(P, Y))
    kl_iterations.append(iters)
    return Projection2D(coords=Y, kl_history=kl_history, kl_iterations=kl_iterations, seed=int(seed))


def project(
    features,
    perplexity=50.0,
    iters=1000,
    seed=0,
    lr_embed=200.0,
    early_exaggeration=12.0,
    ee_iters=250,
    momentum_switch=250,
    kl_every=1,
    ids=None,
    dtype=np.float64,
):
    """Affinities plus embedding in one call; the per-interval entry point."""
    aff = pairwise_affinities(features, perplexity=perplexity, ids=ids, dtype=np.float64)
    return tsne_embed(
        aff,
        iters=iters,
        seed=seed,
        lr_embed=lr_embed,
        early_exaggeration=early_exaggeration,
        ee_iters=ee_iters,
        momentum_switch=momentum_switch,
        kl_every=kl_every,
        dtype=dtype,
    )
