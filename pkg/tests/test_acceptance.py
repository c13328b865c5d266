"""Acceptance gate: one test per shipping criterion.

Run with -s to see a checklist line per criterion. The desk benchmark
criteria (6a-6c) share one module fixture that performs all seven fold
runs; expect roughly four to five minutes wall time for the module.
"""

import math
import time

import numpy as np
import pytest

import opal.autodiff as ad
import opal.tsne as tsne
from opal.data import LabelStore, make_pairs, stratified_split
from opal.losses import class_weight_tau, contrastive_loss, semisup_loss, supervised_loss
from opal.metrics import cohens_kappa
from opal.network import Arch, init_params, classify_var, project_contrastive_var
from opal.opf import PropagationResult, PrototypeSet, propagate
from opal.optim import cosine_lr
from opal.selection import ActiveQuery, merge_active, select_confident
from opal.trainer import (
    FoldRun,
    benchmark_config,
    crossval_run,
    ensemble_predict,
    interval_due,
    make_benchmark_dataset,
    make_blob_dataset,
    resume_run,
    train_supervised_baseline,
)

from helpers import (
    brute_force_propagate,
    numeric_grad_at,
    reference_confidence,
    rel_err,
    sample_coordinates,
)


# ---------- criteria 1 and 2: propagation vs brute force ----------

def _uniform_instance(rng):
    # uniform 2D point cloud, 2..5 prototypes covering 2..n_proto classes
    n = int(rng.integers(6, 51))
    n_proto = int(rng.integers(2, 6))
    num_classes = int(rng.integers(2, n_proto + 1))
    coords = rng.uniform(0.0, 1.0, size=(n, 2))
    ids = rng.permutation(np.arange(100, 100 + 2 * n))[:n]
    pick = rng.permutation(n)[:n_proto]
    labels = np.concatenate([
        np.arange(num_classes),
        rng.integers(0, num_classes, size=n_proto - num_classes),
    ])
    return coords, ids, PrototypeSet(ids=ids[pick], labels=labels)


@pytest.fixture(scope="module")
def propagation_sweep():
    rng = np.random.default_rng(2025)
    mismatches = []
    conf_rows = []
    t0 = time.monotonic()
    for trial in range(200):
        coords, ids, protos = _uniform_instance(rng)
        result = propagate(coords, ids, protos)
        expect = brute_force_propagate(coords, ids, protos.ids, protos.labels)
        if set(int(v) for v in result.ids) != set(expect):
            mismatches.append((trial, "id set"))
            continue
        for i, sid in enumerate(result.ids):
            lab, cost, rup, root = expect[int(sid)]
            ok = (
                int(result.pseudo_labels[i]) == lab
                and abs(result.costs[i] - cost) <= 1e-9
                and int(result.roots[i]) == root
                and (math.isnan(result.runner_up[i]) if math.isnan(rup)
                     else abs(result.runner_up[i] - rup) <= 1e-9)
            )
            if not ok:
                mismatches.append((trial, int(sid)))
            conf_rows.append((float(result.costs[i]), float(result.runner_up[i]),
                              float(result.confidence[i])))
    return {"elapsed": time.monotonic() - t0, "mismatches": mismatches,
            "samples": conf_rows}


def test_criterion_1_propagation_matches_brute_force(propagation_sweep):
    sweep = propagation_sweep
    assert sweep["mismatches"] == [], sweep["mismatches"][:5]
    assert sweep["elapsed"] < 30.0
    print(f"CRITERION 1: PASS - 200 instances, {len(sweep['samples'])} samples, "
          f"labels/costs/runner-ups/roots exact, {sweep['elapsed']:.1f}s")


def test_criterion_2_confidence_law(propagation_sweep):
    for cost, rup, conf in propagation_sweep["samples"]:
        assert conf == pytest.approx(reference_confidence(cost, rup), abs=1e-12)
        assert 0.5 <= conf <= 1.0
    # constructed coincident-point degeneracies
    on_winner = propagate(np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 0.0]]),
                          np.array([1, 2, 3]), PrototypeSet(ids=[1, 2], labels=[0, 1]))
    assert on_winner.costs[0] == 0.0 and on_winner.confidence[0] == 1.0
    on_both = propagate(np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]),
                        np.array([1, 2, 3]), PrototypeSet(ids=[1, 2], labels=[0, 1]))
    assert on_both.confidence[0] == 0.5
    lone = propagate(np.array([[0.0, 0.0], [1.0, 1.0]]),
                     np.array([1, 2]), PrototypeSet(ids=[1], labels=[0]))
    assert math.isnan(lone.runner_up[0]) and lone.confidence[0] == 1.0
    print(f"CRITERION 2: PASS - v = c'/(c+c') on {len(propagation_sweep['samples'])} "
          "samples plus coincident constructions, all within [0.5, 1]")


# ---------- criterion 3: analytic gradients vs central differences ----------

def _worst_rel_err(build_loss, tensors, rng, points=50):
    leaves = {k: ad.Var(v) for k, v in tensors.items()}
    ad.backward(build_loss(leaves))

    def value(ts):
        fresh = {k: ad.Var(v) for k, v in ts.items()}
        return float(build_loss(fresh).data)

    worst = 0.0
    for name, flat in sample_coordinates(tensors, points, rng):
        num = numeric_grad_at(value, tensors, name, flat)
        g = leaves[name].grad
        # a head the loss never touches has no grad entry; its gradient is 0
        ana = 0.0 if g is None else float(g.flat[flat])
        if ana == 0.0 and abs(num) < 1e-7:
            continue  # exact-zero gradient; FD only contributes rounding noise
        worst = max(worst, rel_err(num, ana))
    return worst


def test_criterion_3_gradient_suite():
    rng = np.random.default_rng(303)
    arch = Arch(input_dim=6, num_classes=3, encoder_dims=(8, 4), contrastive_dim=3)
    params = init_params(arch, 11, dtype=np.float64)
    n_params = sum(t.size for t in params.tensors.values())
    assert n_params <= 1000

    X = rng.normal(size=(10, 6))
    y = np.asarray(rng.integers(0, 3, size=10), dtype=np.int64)
    members = [0, 1, 2, 3, 4, 5]
    pairs = [(0 if y[i] == y[j] else 1, i, j)
             for a, i in enumerate(members) for j in members[a + 1:]]
    tau = class_weight_tau(3)

    worst = {
        "contrastive": _worst_rel_err(
            lambda lv: contrastive_loss(project_contrastive_var(lv, arch, X), pairs, tau),
            params.tensors, rng),
        "supervised": _worst_rel_err(
            lambda lv: supervised_loss(classify_var(lv, arch, X), y),
            params.tensors, rng),
        "semisup": _worst_rel_err(
            lambda lv: semisup_loss(classify_var(lv, arch, X), y),
            params.tensors, rng),
    }

    # projection KL with respect to the 2D embedding, 25 points = 50 coords
    feats = rng.normal(size=(25, 5))
    aff = tsne.pairwise_affinities(feats, perplexity=7.0)
    Y = {"Y": rng.normal(size=(25, 2))}
    G = tsne.kl_gradient(aff, Y["Y"])
    kl_worst = 0.0
    for name, flat in sample_coordinates(Y, 50, rng):
        num = numeric_grad_at(lambda ts: float(tsne.kl_divergence(aff, ts["Y"])),
                              Y, name, flat)
        kl_worst = max(kl_worst, rel_err(num, G.flat[flat]))
    worst["kl"] = kl_worst

    for family, err in worst.items():
        assert err < 1e-4, (family, err)
    detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
    print(f"CRITERION 3: PASS - worst rel err over 50 coords each on a "
          f"{n_params}-parameter net: {detail}")


# ---------- criterion 4: closed-form anchors ----------

def test_criterion_4_closed_form_anchors():
    assert class_weight_tau(9) == 8
    for T in (37, 140):
        assert abs(cosine_lr(T, T, 1.0) - 0.19509) < 1e-5
        assert abs(cosine_lr(T, T, 0.3) - 0.19509 * 0.3) < 1e-5
    for m in (2, 5, 11):
        ce = supervised_loss(ad.Var(np.zeros((4, m))), np.zeros(4, dtype=np.int64))
        assert abs(float(ce.data) - math.log(m)) <= 1e-9
    y_true = np.repeat([0, 1], 50)
    y_pred = np.concatenate([np.repeat([0, 1], [45, 5]), np.repeat([0, 1], [15, 35])])
    assert abs(cohens_kappa(y_true, y_pred) - 0.6) <= 1e-9
    ids = list(range(32))
    store = LabelStore(ids, [i % 4 for i in ids], 4)
    for sid in ids:
        store.mark_seed(sid, sid % 4)
    assert len(make_pairs(ids, store)) == 496
    print("CRITERION 4: PASS - tau(9)=8, lr(T)=0.19509*lr0, CE=ln m, "
          "kappa=0.6, C(32,2)=496")


# ---------- criterion 5: selection properties, 1000 cases each ----------

def _random_propagation(rng):
    n = int(rng.integers(4, 60))
    ids = rng.permutation(np.arange(1000, 1000 + 2 * n))[:n]
    labels = rng.integers(0, int(rng.integers(2, 5)), size=n)
    return PropagationResult(
        ids=np.asarray(ids, dtype=np.int64),
        pseudo_labels=np.asarray(labels, dtype=np.int64),
        costs=np.zeros(n),
        runner_up=np.full(n, np.nan),
        confidence=rng.uniform(0.5, 1.0, size=n),
        roots=np.full(n, -1, dtype=np.int64),
    )


def test_criterion_5_selection_properties():
    rng = np.random.default_rng(505)
    for _ in range(1000):
        res = _random_propagation(rng)
        picked = select_confident(res, frac=0.10)
        assert len(set(picked.ids.tolist())) == len(picked.ids)
        for c in np.unique(res.pseudo_labels):
            n_c = int((res.pseudo_labels == c).sum())
            got = int((picked.labels == c).sum())
            assert got == math.ceil(0.10 * n_c), (c, n_c, got)

    for _ in range(1000):
        na, nb = int(rng.integers(0, 15)), int(rng.integers(0, 15))
        ids_a = rng.choice(30, size=na, replace=False)
        ids_b = rng.choice(30, size=nb, replace=False)
        a = ActiveQuery(ids_a, rng.uniform(0.5, 1.0, na), budget=na)
        b = ActiveQuery(ids_b, rng.uniform(0.5, 1.0, nb), budget=nb)
        labeled = rng.choice(30, size=int(rng.integers(0, 6)), replace=False)
        k = int(rng.integers(0, 12))
        q = merge_active(a, b, k, labeled_ids=labeled)

        best = {}
        for ids, conf in ((ids_a, a.confidence), (ids_b, b.confidence)):
            for sid, v in zip(ids, conf):
                sid = int(sid)
                best[sid] = min(best.get(sid, np.inf), float(v))
        for sid in labeled:
            best.pop(int(sid), None)
        expect = [sid for _, sid in sorted((v, s) for s, v in best.items())][:k]
        assert q.ids.tolist() == expect
        assert len(set(q.ids.tolist())) == len(q.ids)
    print("CRITERION 5: PASS - per-class ceil quota and min-keyed k-smallest "
          "merge on 1000 random cases each")


# ---------- criterion 6: desk benchmark ----------

@pytest.fixture(scope="module")
def benchmark():
    t0 = time.monotonic()
    folds = []
    kappa_pairs = {}

    ds = make_benchmark_dataset(seed=0)
    cfg = benchmark_config(seed=0)
    plan = stratified_split(ds, cfg.fold_count, cfg.labeled_frac, cfg.seed)
    k2s, k5s = [], []
    for k in range(cfg.fold_count):
        fr = FoldRun(ds, plan.folds[k], cfg, fold_index=k)
        fr.run()
        res = fr.fold_result()
        nets = train_supervised_baseline(ds, fr.store.labeled_ids(), cfg, fold_index=k)
        pred = ensemble_predict(nets, fr.test_features)
        base = float(np.mean(pred == fr.test_labels))
        folds.append((float(res["final"]["accuracy"]), base))
        by_frac = {row["labeled_frac"]: row["kappa"] for row in res["checkpoints"]}
        k2s.append(by_frac[0.02])
        k5s.append(by_frac[0.05])
    kappa_pairs[0] = (float(np.mean(k2s)), float(np.mean(k5s)))

    for seed in (1, 2, 3, 4):
        ds = make_benchmark_dataset(seed=seed)
        cfg = benchmark_config(seed=seed)
        plan = stratified_split(ds, cfg.fold_count, cfg.labeled_frac, cfg.seed)
        fr = FoldRun(ds, plan.folds[0], cfg, fold_index=0)
        fr.run()
        by_frac = {row["labeled_frac"]: row["kappa"]
                   for row in fr.fold_result()["checkpoints"]}
        kappa_pairs[seed] = (by_frac[0.02], by_frac[0.05])

    return {"folds": folds, "kappa": kappa_pairs, "wall": time.monotonic() - t0}


def test_criterion_6a_ensemble_beats_supervised_baseline(benchmark):
    wins = sum(1 for eng, base in benchmark["folds"] if eng > base)
    detail = ", ".join(f"fold{i} {e:.4f} vs {b:.4f}"
                       for i, (e, b) in enumerate(benchmark["folds"]))
    assert wins >= 2, detail
    print(f"CRITERION 6a: PASS - ensemble above baseline in {wins}/3 folds ({detail})")


def test_criterion_6b_kappa_grows_with_label_budget(benchmark):
    gains = {s: k5 > k2 for s, (k2, k5) in benchmark["kappa"].items()}
    detail = ", ".join(f"seed{s} {k2:.3f}->{k5:.3f}"
                       for s, (k2, k5) in sorted(benchmark["kappa"].items()))
    assert sum(gains.values()) >= 4, detail
    print(f"CRITERION 6b: PASS - kappa@5% > kappa@2% in "
          f"{sum(gains.values())}/5 seeds ({detail})")


def test_criterion_6c_benchmark_fits_time_budget(benchmark):
    assert benchmark["wall"] < 300.0
    print(f"CRITERION 6c: PASS - all 7 fold runs in {benchmark['wall']:.0f}s (< 300s)")


# ---------- criterion 7: kill and resume ----------

def test_criterion_7_resume_reproduces_uninterrupted_run(tmp_path):
    from opal.trainer import RunConfig

    ds = make_blob_dataset(n=80, d=6, num_classes=3, seed=1)
    cfg = RunConfig(n_epochs=6, w_epochs=2, e_int=2, k_active=1, n_active=2,
                    labeled_frac=0.1, fold_count=2, seed=3, batch_size=8,
                    perplexity=5.0, tsne_iters=30, tsne_ee_iters=10,
                    tsne_momentum_switch=10, tsne_kl_every=10,
                    metric_fracs=(0.15,)).validate()
    straight = crossval_run(ds, cfg, run_dir=tmp_path / "straight")
    # kill mid-fold-1, past an oracle interval, then resume from checkpoint
    paused = crossval_run(ds, cfg, run_dir=tmp_path / "resumed", stop_after=(1, 3))
    assert paused["paused"] is True
    resumed = resume_run(tmp_path / "resumed", dataset=ds)
    assert resumed == straight
    for fold in (0, 1):
        for name in ("events.jsonl", "checkpoint.bin", "fold_result.json"):
            a = (tmp_path / "straight" / f"fold{fold}" / name).read_bytes()
            b = (tmp_path / "resumed" / f"fold{fold}" / name).read_bytes()
            assert a == b, (fold, name)
    print("CRITERION 7: PASS - resumed run equals straight run, metrics and "
          "event logs byte for byte")


# ---------- criterion 8: training-loop wiring ----------

def test_criterion_8_training_loop_wiring():
    from opal.trainer import RunConfig

    ds = make_blob_dataset(n=80, d=6, num_classes=3, seed=1)
    cfg = RunConfig(n_epochs=6, w_epochs=2, e_int=2, k_active=1, n_active=2,
                    labeled_frac=0.1, fold_count=2, seed=3, batch_size=8,
                    perplexity=5.0, tsne_iters=30, tsne_ee_iters=10,
                    tsne_momentum_switch=10, tsne_kl_every=10,
                    metric_fracs=(0.15,), trace=True).validate()
    traces = []
    results = crossval_run(ds, cfg, trace_sink=traces)
    assert len(traces) == cfg.fold_count

    schedule = [e for e in range(1, cfg.n_epochs + 1)
                if interval_due(e, cfg.w_epochs, cfg.e_int)]
    reference = [e for e in range(1, 41) if interval_due(e, 15, 5)]
    assert reference == [16, 20, 25, 30, 35, 40]

    for tr in traces:
        # (i) classifier losses silent through warm-up
        assert all(e > cfg.w_epochs for e in tr["supervised_epochs"])
        assert all(e > cfg.w_epochs for e in tr["semisup_epochs"])
        assert tr["contrastive_epochs"] == set(range(1, cfg.n_epochs + 1))
        # (ii) projection intervals exactly on schedule
        assert tr["interval_epochs"] == schedule
        # (iii) each network consumes only its partner's pseudo-labels
        for net in (0, 1):
            for epoch, consumed in tr["consumed"][net].items():
                newest = max(e for e in tr["produced"][1 - net] if e <= epoch)
                assert consumed <= tr["produced"][1 - net][newest], (net, epoch)
        # (iv) oracle budget exhausts exactly, later intervals stay silent
        assert max(tr["oracle_epochs"]) < schedule[-1]
    for fold in results["folds"]:
        assert fold["c_active"] == cfg.n_active
    print("CRITERION 8: PASS - warm-up purity, interval schedule, cross-network "
          "exchange and exact budget stop verified on an instrumented run")
