"""Neighborhood-preserving 2D projection: entropy calibration, KL descent."""

import numpy as np
import pytest

from opal.tsne import (
    AffinityMatrix,
    DegenerateRowError,
    Projection2D,
    kl_divergence,
    kl_gradient,
    pairwise_affinities,
    project,
    tsne_embed,
)


def _cloud(n=90, d=8, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=4.0, size=(3, d))
    return (centers[np.arange(n) % 3] + rng.normal(size=(n, d))).astype(np.float64)


# ---------- affinity calibration ----------

def test_rows_hit_entropy_target_within_tolerance():
    aff = pairwise_affinities(_cloud(), perplexity=20.0)
    target_bits = np.log2(20.0)
    np.testing.assert_allclose(aff.entropy_bits, target_bits, atol=1e-5)


def test_joint_matrix_symmetric_and_normalized():
    aff = pairwise_affinities(_cloud(n=40), perplexity=10.0)
    P = aff.P
    np.testing.assert_allclose(P, P.T, atol=0)
    np.testing.assert_allclose(P.sum(), 1.0, atol=1e-12)
    assert P.min() >= 0.0
    np.testing.assert_array_equal(np.diag(P), 0.0)


def test_sigmas_grow_with_sparser_neighborhoods():
    # a point far from everything needs a wider kernel to reach the same entropy
    X = _cloud(n=30)
    X[0] += 40.0
    aff = pairwise_affinities(X, perplexity=8.0)
    assert aff.sigmas[0] > np.median(aff.sigmas[1:])


def test_perplexity_clamped_with_warning():
    X = _cloud(n=12)
    with pytest.warns(RuntimeWarning, match="clamped"):
        aff = pairwise_affinities(X, perplexity=50.0)
    assert aff.perplexity == 10.0  # n - 2


def test_duplicate_rows_raise_with_ids():
    X = _cloud(n=20)
    X[7] = X[3]
    ids = np.arange(500, 520)
    with pytest.raises(DegenerateRowError, match="503"):
        pairwise_affinities(X, perplexity=5.0, ids=ids)


def test_affinity_input_validation():
    with pytest.raises(ValueError, match="at least 3"):
        pairwise_affinities(np.zeros((2, 4)), perplexity=1.0)
    with pytest.raises(ValueError, match="at least 1"):
        pairwise_affinities(_cloud(n=10), perplexity=0.5)


# ---------- KL and its analytic gradient ----------

def test_kl_nonnegative_and_zero_only_at_match():
    aff = pairwise_affinities(_cloud(n=25), perplexity=6.0)
    Y = np.random.default_rng(0).normal(size=(25, 2))
    assert kl_divergence(aff, Y) > 0.0


def test_kl_gradient_matches_finite_differences():
    aff = pairwise_affinities(_cloud(n=15), perplexity=4.0)
    Y = np.random.default_rng(1).normal(size=(15, 2)) * 0.5
    g = kl_gradient(aff, Y)
    eps = 1e-6
    rng = np.random.default_rng(2)
    for _ in range(10):
        i, j = rng.integers(15), rng.integers(2)
        Yp, Ym = Y.copy(), Y.copy()
        Yp[i, j] += eps
        Ym[i, j] -= eps
        fd = (kl_divergence(aff, Yp) - kl_divergence(aff, Ym)) / (2 * eps)
        denom = max(abs(fd), abs(g[i, j]), 1e-8)
        assert abs(fd - g[i, j]) / denom < 1e-4


# ---------- gradient descent behavior ----------

def test_kl_decreases_and_embedding_shape():
    res = project(_cloud(), perplexity=15.0, iters=400, seed=1,
                  ee_iters=100, momentum_switch=100, kl_every=50)
    assert isinstance(res, Projection2D)
    assert res.coords.shape == (90, 2)
    assert res.kl_history[-1] < res.kl_history[0]
    assert res.kl_iterations[-1] == 400
    assert np.isfinite(res.coords).all()


def test_kl_measured_against_plain_affinities():
    # during early exaggeration the reported KL must use the un-boosted target
    res = project(_cloud(n=50), perplexity=10.0, iters=60, seed=2,
                  early_exaggeration=12.0, ee_iters=50, kl_every=10)
    for kl in res.kl_history:
        assert 0.0 <= kl < 10.0


def test_separated_clusters_stay_separated():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(30, 6)) + 50.0
    b = rng.normal(size=(30, 6)) - 50.0
    X = np.vstack([a, b])
    Y = project(X, perplexity=8.0, iters=400, seed=3, kl_every=100).coords
    intra = max(np.linalg.norm(Y[:30] - Y[:30].mean(0), axis=1).mean(),
                np.linalg.norm(Y[30:] - Y[30:].mean(0), axis=1).mean())
    inter = np.linalg.norm(Y[:30].mean(0) - Y[30:].mean(0))
    assert inter > 2.0 * intra


def test_embedding_stays_centered():
    res = project(_cloud(n=40), perplexity=10.0, iters=50, seed=5, kl_every=50)
    np.testing.assert_allclose(res.coords.mean(axis=0), 0.0, atol=1e-9)


def test_seed_determinism():
    X = _cloud(n=40)
    r1 = project(X, perplexity=10.0, iters=50, seed=11, kl_every=50)
    r2 = project(X, perplexity=10.0, iters=50, seed=11, kl_every=50)
    r3 = project(X, perplexity=10.0, iters=50, seed=12, kl_every=50)
    np.testing.assert_array_equal(r1.coords, r2.coords)
    assert not np.array_equal(r1.coords, r3.coords)


def test_float32_mode_stays_float32():
    X = _cloud(n=40).astype(np.float32)
    res = project(X, perplexity=10.0, iters=30, seed=0, kl_every=30, dtype=np.float32)
    assert res.coords.dtype == np.float32


def test_embed_accepts_raw_matrix():
    aff = pairwise_affinities(_cloud(n=20), perplexity=5.0)
    r1 = tsne_embed(aff, iters=20, seed=4, kl_every=20)
    r2 = tsne_embed(aff.P, iters=20, seed=4, kl_every=20)
    np.testing.assert_array_equal(r1.coords, r2.coords)


def test_embed_rejects_nonpositive_iters():
    aff = pairwise_affinities(_cloud(n=10), perplexity=3.0)
    with pytest.raises(ValueError):
        tsne_embed(aff, iters=0, seed=0)
