"""Run orchestration: the cooperative annotation loop, folds, checkpoints.

One fold proceeds in epochs:

* epochs 1..w_epochs (WARMUP): both networks minimize only the pair
  contrastive loss over labeled batches, shaping the latent space before
  any propagation is attempted.
* from epoch w_epochs+1 on (MAIN), with a projection interval firing at
  w_epochs+1 and then every e_int-th epoch: each network encodes the full
  training split, projects it to 2D, propagates labels from the current
  seed+oracle prototypes, keeps its most confident picks per class and
  nominates its least confident points. Nominations are merged and sent to
  the oracle while the answer budget lasts; each network then trains
  against the *other* network's confident picks (cross-training) alongside
  the supervised and contrastive terms on labeled batches.

Interval work consumes no stateful RNG (projection seeds are derived from
epoch and network), so an interval interrupted by an oracle timeout can be
replayed verbatim after resume. Checkpoints carry parameters, optimizer
velocity, label state, pseudo-label assignments, RNG states and the event
log position; resuming reproduces the uninterrupted trajectory bit for
bit, which the test suite asserts.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import tsne
from .data import (
    AugmentPolicy,
    LabelStore,
    SplitPlan,
    augment_batch,
    make_blob_dataset,
    make_pairs,
    stratified_split,
)
from .losses import (
    LossBreakdown,
    class_weight_tau,
    contrastive_loss,
    semisup_loss,
    supervised_loss,
)
from .metrics import accuracy, cohens_kappa
from .network import (
    Arch,
    classify,
    classify_var,
    init_params,
    load_network,
    make_leaves,
    project_contrastive_var,
    save_network,
)
from .opf import PrototypeSet, propagate, write_propagation_csv
from .optim import OptimizerState, sgd_step
from .selection import (
    OracleTimeout,
    SimulatedOracle,
    merge_active,
    oracle_label,
    select_confident,
    select_uncertain,
)

__all__ = [
    "RunConfig",
    "RunState",
    "ConfigError",
    "FoldRun",
    "interval_due",
    "ensemble_predict",
    "crossval_run",
    "resume_run",
    "read_checkpoint",
    "extract_network_blob",
    "train_supervised_baseline",
    "make_benchmark_dataset",
    "benchmark_config",
    "WARMUP",
    "MAIN",
    "WAITING_FOR_LABELS",
    "DONE",
]

WARMUP = "WARMUP"
MAIN = "MAIN"
WAITING_FOR_LABELS = "WAITING_FOR_LABELS"
DONE = "DONE"

CHECKPOINT_MAGIC = b"OPALRUN1"


class ConfigError(ValueError):
    """A run configuration field is missing, unknown or out of range."""


@dataclass
class RunConfig:
    # schedule
    n_epochs: int = 140
    w_epochs: int = 15
    e_int: int = 5
    k_active: int = 2
    n_active: int = 48
    labeled_frac: float = 0.01
    fold_count: int = 3
    seed: int = 0
    # optimizer
    batch_size: int = 32
    lr0: float = 3e-4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    nesterov: bool = True
    # losses / architecture
    margin: float = 2.0
    encoder_dims: tuple = (256, 64)
    contrastive_dim: int = 32
    # selection and exchange
    select_frac: float = 0.10
    runner_up: str = "prototype"
    cross_training: bool = True
    # augmentation magnitudes
    weak_jitter: float = 0.05
    strong_jitter: float = 0.1
    strong_mask_frac: float = 0.125
    strong_scale_jitter: float = 0.1
    # projection
    perplexity: float = 50.0
    tsne_iters: int = 1000
    tsne_lr: float = 200.0
    tsne_early_exaggeration: float = 12.0
    tsne_ee_iters: int = 250
    tsne_momentum_switch: int = 250
    tsne_kl_every: int = 1
    tsne_dtype: str = "float64"
    # bookkeeping
    data: str = "synthetic"
    data_format: str = "csv"
    oracle: str = "simulated"
    oracle_timeout: float | None = None
    checkpoint_every: int = 1
    snapshot_intervals: bool = True
    metric_fracs: tuple = (0.02, 0.03, 0.04, 0.05)
    trace: bool = False

    def validate(self):
        if self.w_epochs < 1 or self.n_epochs <= self.w_epochs:
            raise ConfigError("need n_epochs > w_epochs >= 1")
        if self.e_int < 1:
            raise ConfigError("e_int must be at least 1")
        if self.k_active < 1 or self.n_active < 0:
            raise ConfigError("k_active must be >= 1 and n_active >= 0")
        if not 0 < self.labeled_frac < 1:
            raise ConfigError("labeled_frac must be in (0, 1)")
        if self.fold_count < 2:
            raise ConfigError("fold_count must be at least 2")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.lr0 <= 0 or self.margin <= 0:
            raise ConfigError("lr0 and margin must be positive")
        if not 0 < self.select_frac <= 1:
            raise ConfigError("select_frac must be in (0, 1]")
        if self.runner_up not in ("prototype", "class"):
            raise ConfigError("runner_up must be 'prototype' or 'class'")
        if self.oracle not in ("simulated", "interactive"):
            raise ConfigError("oracle must be 'simulated' or 'interactive'")
        if self.tsne_dtype not in ("float32", "float64"):
            raise ConfigError("tsne_dtype must be 'float32' or 'float64'")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be at least 1")
        return self

    def arch_for(self, input_dim, num_classes):
        return Arch(
            input_dim=input_dim,
            num_classes=num_classes,
            encoder_dims=tuple(self.encoder_dims),
            contrastive_dim=self.contrastive_dim,
        )

    def weak_policy(self):
        return AugmentPolicy(jitter_sigma=self.weak_jitter)

    def strong_policy(self):
        return AugmentPolicy(
            jitter_sigma=self.strong_jitter,
            mask_frac=self.strong_mask_frac,
            scale_jitter=self.strong_scale_jitter,
        )

    def to_text(self):
        lines = []
        for f in dc_fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif v is None:
                v = "none"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name: f for f in dc_fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown config key: {key}")
            kwargs[key] = _coerce(key, raw, known[key])
        return cls(**kwargs).validate()


def _coerce(key, raw, f):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    base = f.default
    if key in ("encoder_dims",):
        return tuple(int(p) for p in text.split(",") if p.strip())
    if key in ("metric_fracs",):
        return tuple(float(p) for p in text.split(",") if p.strip())
    if key == "oracle_timeout":
        return None if text.lower() in ("none", "") else float(text)
    if isinstance(base, bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"bad boolean for {key}: {raw!r}")
    if isinstance(base, int):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"bad integer for {key}: {raw!r}") from None
    if isinstance(base, float):
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"bad number for {key}: {raw!r}") from None
    return text


def interval_due(epoch, w_epochs, e_int):
    """Projection intervals fire right after warm-up and every e_int epochs."""
    if epoch <= w_epochs:
        return False
    return epoch == w_epochs + 1 or epoch % e_int == 0


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def ensemble_predict(params_list, X):
    """Argmax of the averaged softmax vectors; ties go to the lower class."""
    if not params_list:
        raise ValueError("need at least one network")
    avg = None
    for p in params_list:
        probs = _softmax(classify(p, X).astype(np.float64))
        avg = probs if avg is None else avg + probs
    avg /= len(params_list)
    return avg.argmax(axis=1)


@dataclass
class RunState:
    epoch: int = 0
    phase: str = WARMUP
    c_active: int = 0
    metrics_history: list = field(default_factory=list)
    pending: list = field(default_factory=list)


def _fold_seed_streams(config, fold_index):
    root = np.random.SeedSequence([int(config.seed), int(fold_index)])
    init1, init2, shuffle, aug0, aug1 = root.spawn(5)
    return {"init1": init1, "init2": init2, "shuffle": shuffle, "aug0": aug0, "aug1": aug1}


def _tsne_seed(config, fold_index, epoch, net):
    ss = np.random.SeedSequence([int(config.seed), int(fold_index), int(epoch), int(net)])
    return int(ss.generate_state(1)[0])


class FoldRun:
    """State and loop for one cross-validation fold."""

    def __init__(self, dataset, fold_split, config, fold_index=0, run_dir=None,
                 oracle=None, status_cb=None, _from_checkpoint=False):
        self.dataset = dataset
        self.fold = fold_split
        self.config = config
        self.fold_index = int(fold_index)
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.status_cb = status_cb

        self.train_ids = np.asarray(fold_split.train_ids, dtype=np.int64)
        self.test_ids = np.asarray(fold_split.test_ids, dtype=np.int64)
        self.train_features = dataset.features_for(self.train_ids)
        self.test_features = dataset.features_for(self.test_ids)
        self.test_labels = np.asarray(
            [dataset.labels[dataset.row_of(s)] for s in self.test_ids], dtype=np.int64
        )

        self.arch = config.arch_for(dataset.d, dataset.num_classes)
        self.tau = class_weight_tau(dataset.num_classes)
        self.weak = config.weak_policy()
        self.strong = config.strong_policy()

        truth = np.asarray([dataset.labels[dataset.row_of(s)] for s in self.train_ids])
        self.store = LabelStore(self.train_ids, truth, dataset.num_classes)
        for sid in fold_split.seed_ids:
            self.store.mark_seed(int(sid), int(truth[np.nonzero(self.train_ids == sid)[0][0]]))

        streams = _fold_seed_streams(config, fold_index)
        self.params = [
            init_params(self.arch, streams["init1"]),
            init_params(self.arch, streams["init2"]),
        ]
        self.shuffle_rng = np.random.default_rng(streams["shuffle"])
        self.aug_rng = [np.random.default_rng(streams["aug0"]), np.random.default_rng(streams["aug1"])]

        total = self._planned_steps()
        self.opt = [
            OptimizerState(lr0=config.lr0, total_steps=total, momentum=config.momentum,
                           weight_decay=config.weight_decay, nesterov=config.nesterov),
            OptimizerState(lr0=config.lr0, total_steps=total, momentum=config.momentum,
                           weight_decay=config.weight_decay, nesterov=config.nesterov),
        ]

        self.assigned = [self._empty_pl(2), self._empty_pl(1)]
        self.state = RunState()
        self.trace = None
        if config.trace:
            self.trace = {
                "supervised_epochs": set(),
                "semisup_epochs": set(),
                "contrastive_epochs": set(),
                "interval_epochs": [],
                "oracle_epochs": [],
                "produced": {0: {}, 1: {}},
                "consumed": {0: {}, 1: {}},
            }

        self._event_count = 0
        self._events_fh = None
        self._recorded_fracs = set()
        if self.run_dir is not None:
            self.fold_dir().mkdir(parents=True, exist_ok=True)
            (self.fold_dir() / "snapshots").mkdir(exist_ok=True)
            mode = "a" if _from_checkpoint else "w"
            self._events_fh = open(self.events_path(), mode)

        self.oracle = oracle if oracle is not None else SimulatedOracle(self.store)
        self._latest_snapshot = {1: None, 2: None}

    # ---------- paths ----------

    def fold_dir(self):
        return self.run_dir / f"fold{self.fold_index}"

    def events_path(self):
        return self.fold_dir() / "events.jsonl"

    def checkpoint_path(self):
        return self.fold_dir() / "checkpoint.bin"

    # ---------- plumbing ----------

    def _planned_steps(self):
        cfg = self.config
        bs = cfg.batch_size
        lab0 = len(self.fold.seed_ids)
        lb = max(1, math.ceil(lab0 / bs))
        unlabeled0 = len(self.train_ids) - lab0
        pl_est = math.ceil(max(1, math.ceil(cfg.select_frac * unlabeled0)) / bs)
        return cfg.w_epochs * lb + (cfg.n_epochs - cfg.w_epochs) * max(lb, pl_est)

    def _empty_pl(self, source_net):
        from .selection import PseudoLabelSet

        e = np.asarray([], dtype=np.int64)
        return PseudoLabelSet(source_net, e, e.copy(), np.asarray([], dtype=np.float64))

    def _emit(self, event):
        self._event_count += 1
        if self._events_fh is not None:
            self._events_fh.write(json.dumps(event, sort_keys=True) + "\n")
            self._events_fh.flush()

    def _push_status(self):
        if self.status_cb is None:
            return
        tail = self.state.metrics_history[-5:]
        self.status_cb(
            {
                "fold": self.fold_index,
                "epoch": self.state.epoch,
                "phase": self.state.phase,
                "c_active": self.state.c_active,
                "n_active": self.config.n_active,
                "labeled_count": int(len(self.store.labeled_ids())),
                "pending_queries": list(self.state.pending),
                "metrics_tail": tail,
                "snapshots": dict(self._latest_snapshot),
            }
        )

    def _set_phase(self, phase, pending=None):
        self.state.phase = phase
        self.state.pending = list(pending) if pending else []
        self._push_status()

    def _batch_sequence(self, ids, k_batches):
        """k batches cycling whole shuffled passes; within a pass each id
        appears exactly once."""
        ids = np.asarray(ids)
        bs = self.config.batch_size
        out = []
        while len(out) < k_batches:
            perm = self.shuffle_rng.permutation(len(ids))
            shuffled = ids[perm]
            for i in range(0, len(shuffled), bs):
                out.append(shuffled[i : i + bs])
        return out[:k_batches]

    def _labels_for(self, ids):
        return np.asarray([self.store.label(int(s)) for s in ids], dtype=np.int64)

    # ---------- training steps ----------

    def _contrastive_term(self, leaves, batch_ids, net):
        X = self.dataset.features_for(batch_ids)
        views = augment_batch(X, self.weak, self.aug_rng[net])
        z = project_contrastive_var(leaves, self.arch, views)
        pos = {int(s): i for i, s in enumerate(batch_ids)}
        triples = [(y, pos[a], pos[b]) for y, a, b in make_pairs(batch_ids, self.store)]
        if not triples:
            self._emit({"type": "warning", "what": "empty_pair_batch", "epoch": self.state.epoch + 1, "network": net + 1})
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return contrastive_loss(z, triples, self.tau, self.config.margin)
        return contrastive_loss(z, triples, self.tau, self.config.margin)

    def warmup_epoch(self, epoch):
        cfg = self.config
        labeled = self.store.labeled_ids()
        n_batches = math.ceil(len(labeled) / cfg.batch_size)
        batches = self._batch_sequence(labeled, n_batches)
        sums = [0.0, 0.0]
        for batch_ids in batches:
            for net in (0, 1):
                leaves = make_leaves(self.params[net])
                loss = self._contrastive_term(leaves, batch_ids, net)
                ad.backward(loss)
                grads = {k: v.grad for k, v in leaves.items() if v.grad is not None}
                sgd_step(self.params[net].tensors, grads, self.opt[net])
                sums[net] += float(loss.data)
        if self.trace is not None:
            self.trace["contrastive_epochs"].add(epoch)
        return [s / max(1, len(batches)) for s in sums]

    def _train_step(self, net, batch_ids, pl_ids, pl_map, epoch, warned):
        cfg = self.config
        leaves = make_leaves(self.params[net])
        l_cl = self._contrastive_term(leaves, batch_ids, net)
        X_l = self.dataset.features_for(batch_ids)
        logits = classify_var(leaves, self.arch, X_l)
        l_s = supervised_loss(logits, self._labels_for(batch_ids))
        if pl_ids is not None and len(pl_ids):
            X_pl = self.dataset.features_for(pl_ids)
            strong_views = augment_batch(X_pl, self.strong, self.aug_rng[net])
            pl_logits = classify_var(leaves, self.arch, strong_views)
            pseudo = np.asarray([pl_map[int(s)] for s in pl_ids], dtype=np.int64)
            l_ssl = semisup_loss(pl_logits, pseudo)
            if self.trace is not None:
                self.trace["consumed"][net].setdefault(epoch, set()).update(int(s) for s in pl_ids)
        else:
            if not warned[net]:
                self._emit({"type": "warning", "what": "empty_pseudo_set", "epoch": epoch, "network": net + 1})
                warned[net] = True
            l_ssl = ad.Var(np.asarray(0.0, dtype=l_s.data.dtype))
        total = ad.add(ad.add(l_cl, l_s), l_ssl)
        ad.backward(total)
        grads = {k: v.grad for k, v in leaves.items() if v.grad is not None}
        sgd_step(self.params[net].tensors, grads, self.opt[net])
        return LossBreakdown.build(l_cl.data, l_s.data, l_ssl.data)

    def main_epoch(self, epoch):
        cfg = self.config
        labeled = self.store.labeled_ids()
        n_lab_batches = math.ceil(len(labeled) / cfg.batch_size)
        steps_net = []
        for net in (0, 1):
            n_pl = len(self.assigned[net].ids)
            n_pl_batches = math.ceil(n_pl / cfg.batch_size) if n_pl else 0
            steps_net.append(max(n_lab_batches, n_pl_batches))
        steps_max = max(steps_net)
        lab_seq = self._batch_sequence(labeled, steps_max)
        pl_seq = []
        pl_maps = []
        for net in (0, 1):
            pl = self.assigned[net]
            if len(pl.ids):
                pl_seq.append(self._batch_sequence(pl.ids, steps_net[net]))
            else:
                pl_seq.append(None)
            pl_maps.append({int(s): int(l) for s, l in zip(pl.ids, pl.labels)})
        warned = [False, False]
        acc = [[], []]
        for step in range(steps_max):
            for net in (0, 1):
                if step >= steps_net[net]:
                    continue
                pl_ids = pl_seq[net][step] if pl_seq[net] is not None else None
                bd = self._train_step(net, lab_seq[step], pl_ids, pl_maps[net], epoch, warned)
                acc[net].append(bd)
        if self.trace is not None:
            self.trace["supervised_epochs"].add(epoch)
            if any(pl_seq[net] is not None for net in (0, 1)):
                self.trace["semisup_epochs"].add(epoch)
            self.trace["contrastive_epochs"].add(epoch)
        means = {}
        for net in (0, 1):
            if acc[net]:
                means[f"net{net + 1}"] = {
                    "contrastive": float(np.mean([b.l_contrastive for b in acc[net]])),
                    "supervised": float(np.mean([b.l_supervised for b in acc[net]])),
                    "semisup": float(np.mean([b.l_semisup for b in acc[net]])),
                    "total": float(np.mean([b.total for b in acc[net]])),
                }
        return means

    # ---------- interval ----------

    def _prototypes(self):
        ids = self.store.labeled_ids()
        labels = np.asarray([self.store.label(int(s)) for s in ids], dtype=np.int64)
        return PrototypeSet(ids, labels)

    def _project_latents(self, latents, epoch, net):
        cfg = self.config
        seed = _tsne_seed(cfg, self.fold_index, epoch, net)
        dtype = np.float32 if cfg.tsne_dtype == "float32" else np.float64
        kwargs = dict(
            perplexity=cfg.perplexity,
            iters=cfg.tsne_iters,
            seed=seed,
            lr_embed=cfg.tsne_lr,
            early_exaggeration=cfg.tsne_early_exaggeration,
            ee_iters=cfg.tsne_ee_iters,
            momentum_switch=cfg.tsne_momentum_switch,
            kl_every=cfg.tsne_kl_every,
            ids=self.train_ids,
            dtype=dtype,
        )
        try:
            return tsne.project(latents, **kwargs)
        except tsne.DegenerateRowError as exc:
            # coincident latents (e.g. jointly dead ReLUs); jitter
            # deterministically and retry once, loudly
            self._emit(
                {
                    "type": "warning",
                    "what": "degenerate_latents",
                    "epoch": epoch,
                    "network": net + 1,
                    "pairs": [[int(a), int(b)] for a, b in exc.pairs[:16]],
                }
            )
            jrng = np.random.default_rng(
                np.random.SeedSequence([int(cfg.seed), self.fold_index, epoch, net, 7])
            )
            scale = 1e-6 * (1.0 + float(np.abs(latents).max()))
            jittered = latents + jrng.normal(0.0, scale, size=latents.shape)
            return tsne.project(jittered, **kwargs)

    def _snapshot(self, epoch, net, proj, prop, own_pl):
        if self.run_dir is None or not self.config.snapshot_intervals:
            return
        import csv as _csv

        pseudo_sel = set(int(s) for s in own_pl.ids)
        by_id = {int(s): i for i, s in enumerate(prop.ids)}
        path = self.fold_dir() / "snapshots" / f"projection_net{net + 1}_epoch{epoch}.csv"
        with open(path, "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["id", "x", "y", "state", "label_or_pseudo", "confidence"])
            for row, sid in enumerate(self.train_ids):
                sid = int(sid)
                x, y = proj.coords[row]
                kind = self.store.kind(sid)
                if kind in ("seed", "oracle"):
                    writer.writerow([sid, repr(float(x)), repr(float(y)), kind, self.store.label(sid), "1.0"])
                else:
                    i = by_id[sid]
                    state = "pseudo" if sid in pseudo_sel else "unlabeled"
                    writer.writerow(
                        [
                            sid,
                            repr(float(x)),
                            repr(float(y)),
                            state,
                            int(prop.pseudo_labels[i]),
                            repr(float(prop.confidence[i])),
                        ]
                    )
        write_propagation_csv(prop, self.fold_dir() / "snapshots" / f"propagation_net{net + 1}_epoch{epoch}.csv")
        self._latest_snapshot[net + 1] = str(path)

    def _query_meta(self, ids, merged, prop, proj):
        by_id = {int(s): i for i, s in enumerate(prop.ids)}
        coord_row = {int(s): i for i, s in enumerate(self.train_ids)}
        conf = {int(s): float(v) for s, v in zip(merged.ids, merged.confidence)}
        meta = []
        for sid in ids:
            sid = int(sid)
            i = by_id.get(sid)
            row = coord_row[sid]
            sample = self.dataset.sample(sid)
            meta.append(
                {
                    "id": sid,
                    "confidence": conf[sid],
                    "payload_ref": sample.payload_ref,
                    "x": float(proj.coords[row][0]),
                    "y": float(proj.coords[row][1]),
                    "suggested": int(prop.pseudo_labels[i]) if i is not None else None,
                }
            )
        return meta

    def interval_step(self, epoch):
        cfg = self.config
        props, pls, queries, projs = [], [], [], []
        protos = self._prototypes()
        for net in (0, 1):
            latents = np.asarray(
                _encode_full(self.params[net], self.train_features), dtype=np.float64
            )
            proj = self._project_latents(latents, epoch, net)
            prop = propagate(proj.coords, self.train_ids, protos, runner_up=cfg.runner_up)
            pl = select_confident(prop, cfg.select_frac, source_network=net + 1)
            query = select_uncertain(prop, cfg.k_active)
            props.append(prop)
            pls.append(pl)
            queries.append(query)
            projs.append(proj)
            self._emit(
                {
                    "type": "interval",
                    "epoch": epoch,
                    "network": net + 1,
                    "pl_size": len(pl),
                    "kl_initial": float(proj.kl_history[0]),
                    "kl_final": float(proj.kl_history[-1]),
                }
            )
            if self.trace is not None:
                self.trace["produced"][net][epoch] = set(int(s) for s in pl.ids)
        if self.trace is not None:
            self.trace["interval_epochs"].append(epoch)

        answered = {}
        if self.state.c_active < cfg.n_active:
            merged = merge_active(queries[0], queries[1], cfg.k_active, labeled_ids=self.store.labeled_ids())
            room = cfg.n_active - self.state.c_active
            ask = [int(s) for s in merged.ids[:room]]
            if ask:
                meta = self._query_meta(ask, merged, props[0], projs[0])
                self._emit(
                    {
                        "type": "oracle_query",
                        "epoch": epoch,
                        "ids": ask,
                        "confidence": [float(v) for v in merged.confidence[: len(ask)]],
                    }
                )
                if hasattr(self.oracle, "begin"):
                    self.oracle.begin(self.query_key(epoch), ask, meta)
                    self._set_phase(WAITING_FOR_LABELS, pending=meta)
                answered, self.state.c_active = oracle_label(
                    merged, self.oracle, self.store, self.state.c_active, cfg.n_active, meta=meta
                )
                self._set_phase(MAIN)
                self._emit(
                    {
                        "type": "oracle_answer",
                        "epoch": epoch,
                        "labels": {str(k): v for k, v in answered.items()},
                        "answered_by": self.oracle.answered_by,
                        "latency": float(self.oracle.last_latency()),
                    }
                )
                if self.trace is not None:
                    self.trace["oracle_epochs"].append(epoch)

        own = [pls[0].without(answered), pls[1].without(answered)]
        if cfg.cross_training:
            self.assigned = [own[1], own[0]]
        else:
            self.assigned = [own[0], own[1]]

        self.store.clear_pseudo()
        best = {}
        for pl in own:
            for sid, lab, v in zip(pl.ids, pl.labels, pl.confidence):
                sid = int(sid)
                if sid not in best or v > best[sid]:
                    self.store.set_pseudo(sid, int(lab), float(v))
                    best[sid] = float(v)

        for net in (0, 1):
            self._snapshot(epoch, net, projs[net], props[net], own[net])

        labeled_now = len(self.store.labeled_ids())
        for frac in cfg.metric_fracs:
            if frac in self._recorded_fracs:
                continue
            if labeled_now >= math.ceil(frac * self.dataset.n):
                self._recorded_fracs.add(frac)
                self._evaluate("checkpoint", epoch, labeled_frac=frac)

    def query_key(self, epoch):
        return self.fold_index * 1_000_000 + epoch

    # ---------- evaluation ----------

    def _evaluate(self, scope, epoch, labeled_frac=None):
        preds = ensemble_predict(self.params, self.test_features)
        entry = {
            "scope": scope,
            "epoch": epoch,
            "labeled_count": int(len(self.store.labeled_ids())),
            "labeled_frac": labeled_frac,
            "accuracy": accuracy(self.test_labels, preds),
            "kappa": cohens_kappa(self.test_labels, preds, self.dataset.num_classes),
        }
        self.state.metrics_history.append(entry)
        self._emit({"type": "metrics", **entry})
        self._push_status()
        return entry

    # ---------- checkpointing ----------

    def _state_blob(self, phase, event_count):
        rng_states = {
            "shuffle": self.shuffle_rng.bit_generator.state,
            "aug0": self.aug_rng[0].bit_generator.state,
            "aug1": self.aug_rng[1].bit_generator.state,
        }
        assigned = [
            {
                "source": int(pl.source_network),
                "ids": [int(s) for s in pl.ids],
                "labels": [int(l) for l in pl.labels],
                "confidence": [float(v) for v in pl.confidence],
            }
            for pl in self.assigned
        ]
        return {
            "version": 1,
            "fold_index": self.fold_index,
            "epoch": self.state.epoch,
            "phase": phase,
            "c_active": self.state.c_active,
            "metrics_history": self.state.metrics_history,
            "recorded_fracs": sorted(self._recorded_fracs),
            "event_count": event_count,
            "rng": rng_states,
            "store": self.store.dump(),
            "assigned": assigned,
            "pending": self.state.pending,
        }

    def _write_checkpoint(self, phase=None, pending=None):
        if self.run_dir is None:
            return
        phase = phase or self.state.phase
        blob = self._state_blob(phase, self._event_count)
        if pending is not None:
            blob["pending"] = pending
        header = json.dumps(blob, sort_keys=True).encode("utf-8")
        import io
        import struct

        parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(header)), header]
        for net in (0, 1):
            nb = save_network(self.params[net], self.opt[net], io.BytesIO())
            parts.append(struct.pack("<I", len(nb)))
            parts.append(nb)
        tmp = self.checkpoint_path().with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            for p in parts:
                fh.write(p)
        os.replace(tmp, self.checkpoint_path())

    @classmethod
    def resume(cls, dataset, fold_split, config, fold_index, run_dir, oracle=None, status_cb=None):
        run = cls(dataset, fold_split, config, fold_index, run_dir, oracle, status_cb,
                  _from_checkpoint=True)
        blob, loaded = read_checkpoint(run.checkpoint_path(), expected_arch=run.arch)
        for net in (0, 1):
            run.params[net], run.opt[net] = loaded[net]
        run.state.epoch = int(blob["epoch"])
        run.state.phase = blob["phase"]
        run.state.c_active = int(blob["c_active"])
        run.state.metrics_history = blob["metrics_history"]
        run.state.pending = blob.get("pending") or []
        run._recorded_fracs = set(blob["recorded_fracs"])
        run.store.restore(blob["store"])
        from .selection import PseudoLabelSet

        run.assigned = [
            PseudoLabelSet(
                a["source"],
                np.asarray(a["ids"], dtype=np.int64),
                np.asarray(a["labels"], dtype=np.int64),
                np.asarray(a["confidence"], dtype=np.float64),
            )
            for a in blob["assigned"]
        ]
        run.shuffle_rng.bit_generator.state = blob["rng"]["shuffle"]
        run.aug_rng[0].bit_generator.state = blob["rng"]["aug0"]
        run.aug_rng[1].bit_generator.state = blob["rng"]["aug1"]
        run._truncate_events(int(blob["event_count"]))
        return run

    def _truncate_events(self, count):
        if self._events_fh is not None:
            self._events_fh.close()
        lines = []
        if self.events_path().exists():
            with open(self.events_path()) as fh:
                lines = fh.readlines()
        with open(self.events_path(), "w") as fh:
            fh.writelines(lines[:count])
        self._event_count = count
        self._events_fh = open(self.events_path(), "a")

    # ---------- main loop ----------

    def run(self, stop_after_epoch=None):
        cfg = self.config
        if self.state.phase == DONE:
            return self.state
        while self.state.epoch < cfg.n_epochs:
            epoch = self.state.epoch + 1
            if epoch <= cfg.w_epochs:
                self._set_phase(WARMUP)
                mean_cl = self.warmup_epoch(epoch)
                means = {f"net{n + 1}": {"contrastive": mean_cl[n]} for n in (0, 1)}
            else:
                if interval_due(epoch, cfg.w_epochs, cfg.e_int):
                    try:
                        self.interval_step(epoch)
                    except OracleTimeout:
                        self._set_phase(WAITING_FOR_LABELS, pending=self.state.pending)
                        self._write_checkpoint(phase=WAITING_FOR_LABELS, pending=self.state.pending)
                        return self.state
                self._set_phase(MAIN)
                means = self.main_epoch(epoch)
            self.state.epoch = epoch
            self._emit({"type": "epoch_end", "epoch": epoch, "phase": self.state.phase, "losses": means})
            if epoch % cfg.checkpoint_every == 0 or epoch == cfg.n_epochs:
                self._emit({"type": "checkpoint", "epoch": epoch})
                self._write_checkpoint()
            self._push_status()
            if stop_after_epoch is not None and epoch >= stop_after_epoch:
                return self.state
        self._evaluate("final", self.state.epoch)
        self._set_phase(DONE)
        self._write_checkpoint()
        if self.run_dir is not None:
            with open(self.fold_dir() / "fold_result.json", "w") as fh:
                json.dump(self.fold_result(), fh, sort_keys=True, indent=1)
        if self._events_fh is not None:
            self._events_fh.flush()
        return self.state

    def fold_result(self):
        final = [m for m in self.state.metrics_history if m["scope"] == "final"]
        return {
            "fold": self.fold_index,
            "final": final[-1] if final else None,
            "checkpoints": [m for m in self.state.metrics_history if m["scope"] == "checkpoint"],
            "c_active": self.state.c_active,
            "labeled_final": int(len(self.store.labeled_ids())),
        }


def _encode_full(params, X):
    from .network import encode

    return encode(params, X)


def read_checkpoint(path, expected_arch=None):
    """Parse a fold checkpoint: state header plus both network blobs."""
    import struct

    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError("not a run checkpoint")
    off = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    blob = json.loads(raw[off : off + hlen].decode("utf-8"))
    off += hlen
    loaded = []
    for _ in range(2):
        (blen,) = struct.unpack_from("<I", raw, off)
        off += 4
        loaded.append(load_network(raw[off : off + blen], expected_arch=expected_arch))
        off += blen
    return blob, loaded


def extract_network_blob(path, network):
    """Pull one network's standalone blob (1 or 2) out of a fold checkpoint."""
    import struct

    if network not in (1, 2):
        raise ValueError("network must be 1 or 2")
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError("not a run checkpoint")
    off = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4 + hlen
    for i in (1, 2):
        (blen,) = struct.unpack_from("<I", raw, off)
        off += 4
        if i == network:
            return raw[off : off + blen]
        off += blen
    raise ValueError("checkpoint is missing network blobs")


# ---------- run-level drivers ----------


def _dataset_from_config(config):
    if config.data == "synthetic":
        return make_benchmark_dataset(config.seed)
    from .data import load_dataset

    return load_dataset(config.data, format=config.data_format, fold_count=config.fold_count)


def make_benchmark_dataset(seed=0):
    """The desk-scale blob set: 4 classes, n=1200, d=16.

    Feature scale stays near unit range; the pair-distance loss is summed
    over a batch's pairs, so gradients grow with feature magnitude and the
    stock learning rate assumes normalized inputs.
    """
    return make_blob_dataset(n=1200, d=16, num_classes=4, seed=seed,
                             center_scale=0.375, within_sigma=0.25)


def benchmark_config(seed=0, **overrides):
    """Desk benchmark defaults: short projection schedule, 4% query budget."""
    base = dict(
        n_epochs=140,
        w_epochs=15,
        e_int=5,
        k_active=2,
        n_active=48,
        labeled_frac=0.01,
        fold_count=3,
        seed=seed,
        perplexity=50.0,
        # 100 projection iters keep the label-propagation quality of 150
        # on the blob benchmark while cutting per-interval cost ~30%
        tsne_iters=100,
        tsne_ee_iters=34,
        tsne_momentum_switch=34,
        tsne_kl_every=25,
        tsne_dtype="float32",
        checkpoint_every=25,
        snapshot_intervals=False,
    )
    base.update(overrides)
    return RunConfig(**base).validate()


def _aggregate(fold_results):
    accs = [f["final"]["accuracy"] for f in fold_results]
    kaps = [f["final"]["kappa"] for f in fold_results]
    return {
        "folds": fold_results,
        "mean_accuracy": float(np.mean(accs)),
        "std_accuracy": float(np.std(accs)),
        "mean_kappa": float(np.mean(kaps)),
        "std_kappa": float(np.std(kaps)),
    }


def crossval_run(dataset, config, run_dir=None, oracle_factory=None, status_cb=None,
                 stop_after=None, trace_sink=None):
    """Run every fold; returns the aggregate results dict.

    `stop_after=(fold, epoch)` halts mid-run (for resume tests); a paused
    or stopped run returns {"paused": True, ...} instead of aggregates.
    `trace_sink`, when given, receives each fold's wiring trace.
    """
    config.validate()
    plan = stratified_split(dataset, config.fold_count, config.labeled_frac, config.seed)
    rd = Path(run_dir) if run_dir is not None else None
    if rd is not None:
        rd.mkdir(parents=True, exist_ok=True)
        (rd / "config.txt").write_text(config.to_text())
        (rd / "split.json").write_text(plan.to_json())
    fold_results = []
    for k, fold in enumerate(plan.folds):
        fr = FoldRun(
            dataset,
            fold,
            config,
            fold_index=k,
            run_dir=rd,
            oracle=oracle_factory(k) if oracle_factory else None,
            status_cb=status_cb,
        )
        stop_epoch = stop_after[1] if stop_after is not None and stop_after[0] == k else None
        state = fr.run(stop_after_epoch=stop_epoch)
        if trace_sink is not None and fr.trace is not None:
            trace_sink.append(fr.trace)
        if state.phase != DONE:
            return {"paused": True, "fold": k, "epoch": state.epoch, "phase": state.phase}
        fold_results.append(fr.fold_result())
    results = _aggregate(fold_results)
    if rd is not None:
        with open(rd / "results.json", "w") as fh:
            json.dump(results, fh, sort_keys=True, indent=1)
    return results


def resume_run(run_dir, dataset=None, oracle_factory=None, status_cb=None, stop_after=None):
    """Continue an interrupted run directory to completion."""
    rd = Path(run_dir)
    config = _parse_config_text((rd / "config.txt").read_text())
    if dataset is None:
        dataset = _dataset_from_config(config)
    plan = SplitPlan.from_json((rd / "split.json").read_text())
    fold_results = []
    for k, fold in enumerate(plan.folds):
        done_marker = rd / f"fold{k}" / "fold_result.json"
        ckpt = rd / f"fold{k}" / "checkpoint.bin"
        if done_marker.exists():
            fold_results.append(json.loads(done_marker.read_text()))
            continue
        if ckpt.exists():
            fr = FoldRun.resume(
                dataset, fold, config, k, rd,
                oracle=oracle_factory(k) if oracle_factory else None,
                status_cb=status_cb,
            )
        else:
            fr = FoldRun(
                dataset, fold, config, fold_index=k, run_dir=rd,
                oracle=oracle_factory(k) if oracle_factory else None,
                status_cb=status_cb,
            )
        stop_epoch = stop_after[1] if stop_after is not None and stop_after[0] == k else None
        state = fr.run(stop_after_epoch=stop_epoch)
        if state.phase != DONE:
            return {"paused": True, "fold": k, "epoch": state.epoch, "phase": state.phase}
        fold_results.append(fr.fold_result())
    results = _aggregate(fold_results)
    with open(rd / "results.json", "w") as fh:
        json.dump(results, fh, sort_keys=True, indent=1)
    return results


def _parse_config_text(text):
    mapping = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        mapping[key.strip()] = value.strip()
    return RunConfig.from_mapping(mapping)


def train_supervised_baseline(dataset, labeled_ids, config, fold_index=0, epochs=None):
    """Supervised-only reference: same encoders, same label budget, no
    propagation, no unlabeled data. Returns the two trained networks."""
    arch = config.arch_for(dataset.d, dataset.num_classes)
    streams = _fold_seed_streams(config, fold_index)
    params = [init_params(arch, streams["init1"]), init_params(arch, streams["init2"])]
    rng = np.random.default_rng(streams["shuffle"])
    labeled_ids = np.asarray(sorted(int(s) for s in labeled_ids), dtype=np.int64)
    X = dataset.features_for(labeled_ids)
    y = np.asarray([dataset.labels[dataset.row_of(s)] for s in labeled_ids], dtype=np.int64)
    n_epochs = epochs if epochs is not None else config.n_epochs
    bs = config.batch_size
    n_batches = math.ceil(len(labeled_ids) / bs)
    total = n_epochs * n_batches
    opts = [
        OptimizerState(lr0=config.lr0, total_steps=total, momentum=config.momentum,
                       weight_decay=config.weight_decay, nesterov=config.nesterov)
        for _ in (0, 1)
    ]
    for _ in range(n_epochs):
        perm = rng.permutation(len(labeled_ids))
        for i in range(0, len(labeled_ids), bs):
            rows = perm[i : i + bs]
            for net in (0, 1):
                leaves = make_leaves(params[net])
                logits = classify_var(leaves, arch, X[rows])
                loss = supervised_loss(logits, y[rows])
                ad.backward(loss)
                grads = {k: v.grad for k, v in leaves.items() if v.grad is not None}
                sgd_step(params[net].tensors, grads, opts[net])
    return params
