"""Command line entry points.

Subcommands::

    opal train    [--config FILE] [--out DIR] [--oracle X] [--serve] [k=v ...]
    opal resume   --run DIR [--serve] [--port N]
    opal evaluate --run DIR [--data PATH]
    opal project  [--data PATH | --run DIR --fold K --network 1|2] --out FILE [k=v ...]
    opal export   --run DIR --what WHAT [--fold K] --out FILE

Configuration is key=value: a file of such lines via --config plus inline
overrides after the flags. Unknown keys and malformed values exit with
status 2 and a one-line JSON error on stderr so callers can parse it.
"""

from __future__ import annotations

import argparse
import json
import shutil
import signal
import sys
import threading
from pathlib import Path

from .data import DatasetError, load_dataset
from .trainer import (
    ConfigError,
    RunConfig,
    _dataset_from_config,
    _parse_config_text,
    crossval_run,
    ensemble_predict,
    extract_network_blob,
    read_checkpoint,
    resume_run,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2


def _fail_config(message):
    print(json.dumps({"error": message}), file=sys.stderr)
    raise SystemExit(EXIT_CONFIG)


def _fail(message):
    print(json.dumps({"error": message}), file=sys.stderr)
    raise SystemExit(EXIT_ERROR)


def _build_config(args):
    mapping = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            _fail_config(f"config file not found: {args.config}")
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                _fail_config(f"{args.config}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            mapping[key.strip()] = value.strip()
    for item in getattr(args, "overrides", None) or []:
        if "=" not in item:
            _fail_config(f"override {item!r} is not key=value")
        key, _, value = item.partition("=")
        mapping[key.strip()] = value.strip()
    if getattr(args, "oracle", None):
        mapping["oracle"] = args.oracle
    if getattr(args, "data", None):
        mapping["data"] = args.data
    try:
        return RunConfig.from_mapping(mapping)
    except ConfigError as exc:
        _fail_config(str(exc))


def _load_data(config):
    try:
        return _dataset_from_config(config)
    except DatasetError as exc:
        _fail_config(str(exc))


def _serve_run(dataset, config, run_dir, host, port, resume=False):
    from .server import RunSession, make_server, serve_forever

    session = RunSession(dataset, config, run_dir, resume=resume)
    server = make_server(session, host=host, port=port)
    actual_port = server.server_address[1]
    serve_forever(server)
    session.start()
    print(json.dumps({"serving": True, "host": host, "port": actual_port,
                      "run_id": session.run_id}), flush=True)

    stop = threading.Event()

    def _stop(*_args):
        stop.set()

    try:
        signal.signal(signal.SIGTERM, _stop)
        signal.signal(signal.SIGINT, _stop)
    except ValueError:
        pass  # not the main thread (tests drive this directly)
    while not session.done() and not stop.is_set():
        session.join(timeout=0.2)
    if session.error:
        print(json.dumps({"done": True, "error": session.error}), flush=True)
        server.shutdown()
        raise SystemExit(EXIT_ERROR)
    print(json.dumps({"done": True, "results": session.results}), flush=True)
    # keep answering /status etc. until the caller kills us
    stop.wait()
    server.shutdown()
    return EXIT_OK


def cmd_train(args):
    config = _build_config(args)
    dataset = _load_data(config)
    run_dir = Path(args.out) if args.out else None
    if args.serve:
        if run_dir is None:
            _fail_config("--serve requires --out RUNDIR for snapshots and checkpoints")
        return _serve_run(dataset, config, run_dir, args.host, args.port)
    results = crossval_run(dataset, config, run_dir=run_dir)
    print(json.dumps(results, sort_keys=True))
    return EXIT_OK


def cmd_resume(args):
    run_dir = Path(args.run)
    if not (run_dir / "config.txt").exists():
        _fail_config(f"{args.run} has no config.txt; not a run directory")
    try:
        config = _parse_config_text((run_dir / "config.txt").read_text())
    except ConfigError as exc:
        _fail_config(str(exc))
    dataset = _load_data(config)
    if args.serve:
        return _serve_run(dataset, config, run_dir, args.host, args.port, resume=True)
    results = resume_run(run_dir, dataset=dataset)
    print(json.dumps(results, sort_keys=True))
    return EXIT_OK


def cmd_evaluate(args):
    import numpy as np

    from .metrics import accuracy, cohens_kappa
    from .data import SplitPlan

    run_dir = Path(args.run)
    try:
        config = _parse_config_text((run_dir / "config.txt").read_text())
    except FileNotFoundError:
        _fail_config(f"{args.run} has no config.txt; not a run directory")
    except ConfigError as exc:
        _fail_config(str(exc))
    if args.data:
        config.data = args.data
    dataset = _load_data(config)
    plan = SplitPlan.from_json((run_dir / "split.json").read_text())
    arch = config.arch_for(dataset.d, dataset.num_classes)
    folds = []
    for k, fold in enumerate(plan.folds):
        ckpt = run_dir / f"fold{k}" / "checkpoint.bin"
        if not ckpt.exists():
            continue
        blob, loaded = read_checkpoint(ckpt, expected_arch=arch)
        params = [loaded[0][0], loaded[1][0]]
        X = dataset.features_for(fold.test_ids)
        y = np.asarray([dataset.labels[dataset.row_of(s)] for s in fold.test_ids])
        preds = ensemble_predict(params, X)
        folds.append(
            {
                "fold": k,
                "epoch": blob["epoch"],
                "accuracy": accuracy(y, preds),
                "kappa": cohens_kappa(y, preds, dataset.num_classes),
            }
        )
    if not folds:
        _fail(f"no fold checkpoints under {args.run}")
    out = {
        "folds": folds,
        "mean_accuracy": float(np.mean([f["accuracy"] for f in folds])),
        "mean_kappa": float(np.mean([f["kappa"] for f in folds])),
    }
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def cmd_project(args):
    import csv

    import numpy as np

    from . import tsne
    from .network import encode

    overrides = {}
    for item in args.overrides or []:
        if "=" not in item:
            _fail_config(f"override {item!r} is not key=value")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    allowed = {"perplexity": float, "iters": int, "seed": int, "lr_embed": float}
    opts = {}
    for key, value in overrides.items():
        if key not in allowed:
            _fail_config(f"unknown config key: {key}")
        try:
            opts[key] = allowed[key](value)
        except ValueError:
            _fail_config(f"bad value for {key}: {value!r}")

    if args.run:
        run_dir = Path(args.run)
        try:
            config = _parse_config_text((run_dir / "config.txt").read_text())
        except ConfigError as exc:
            _fail_config(str(exc))
        if args.data:
            config.data = args.data
        dataset = _load_data(config)
        ckpt = run_dir / f"fold{args.fold}" / "checkpoint.bin"
        if not ckpt.exists():
            _fail(f"no checkpoint for fold {args.fold} under {args.run}")
        arch = config.arch_for(dataset.d, dataset.num_classes)
        _, loaded = read_checkpoint(ckpt, expected_arch=arch)
        params = loaded[args.network - 1][0]
        features = encode(params, dataset.features).astype(np.float64)
    else:
        if not args.data:
            _fail_config("project needs --data or --run")
        try:
            dataset = load_dataset(args.data, format=args.format)
        except DatasetError as exc:
            _fail_config(str(exc))
        features = dataset.features.astype(np.float64)

    proj = tsne.project(features, ids=dataset.ids, **opts)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "x", "y", "state", "label_or_pseudo", "confidence"])
        for i, sid in enumerate(dataset.ids):
            writer.writerow(
                [int(sid), repr(float(proj.coords[i, 0])), repr(float(proj.coords[i, 1])),
                 "unlabeled", -1, ""]
            )
    print(json.dumps({"written": str(args.out), "points": int(dataset.n),
                      "kl_final": float(proj.kl_history[-1])}))
    return EXIT_OK


def cmd_export(args):
    run_dir = Path(args.run)
    what = args.what
    out = Path(args.out)
    if what in ("network1", "network2"):
        ckpt = run_dir / f"fold{args.fold}" / "checkpoint.bin"
        if not ckpt.exists():
            _fail(f"no checkpoint for fold {args.fold} under {args.run}")
        blob = extract_network_blob(ckpt, 1 if what == "network1" else 2)
        out.write_bytes(blob)
    elif what == "events":
        src = run_dir / f"fold{args.fold}" / "events.jsonl"
        if not src.exists():
            _fail(f"no event log for fold {args.fold} under {args.run}")
        shutil.copyfile(src, out)
    elif what in ("results", "config", "split"):
        name = {"results": "results.json", "config": "config.txt", "split": "split.json"}[what]
        src = run_dir / name
        if not src.exists():
            _fail(f"{name} not found under {args.run}")
        shutil.copyfile(src, out)
    else:
        _fail_config(f"unknown export target {what!r}")
    print(json.dumps({"written": str(out)}))
    return EXIT_OK


def _parser():
    p = argparse.ArgumentParser(prog="opal", description="active annotation runs")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run cross-validated training")
    t.add_argument("--config", help="key = value config file")
    t.add_argument("--out", help="run directory for checkpoints and logs")
    t.add_argument("--data", help="dataset path (overrides config)")
    t.add_argument("--oracle", choices=["simulated", "interactive"])
    t.add_argument("--serve", action="store_true", help="expose the annotation API")
    t.add_argument("--host", default="127.0.0.1")
    t.add_argument("--port", type=int, default=0)
    t.add_argument("overrides", nargs="*", metavar="key=value")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("resume", help="continue an interrupted run")
    r.add_argument("--run", required=True)
    r.add_argument("--serve", action="store_true")
    r.add_argument("--host", default="127.0.0.1")
    r.add_argument("--port", type=int, default=0)
    r.set_defaults(func=cmd_resume)

    e = sub.add_parser("evaluate", help="score fold checkpoints on their test splits")
    e.add_argument("--run", required=True)
    e.add_argument("--data")
    e.set_defaults(func=cmd_evaluate)

    pj = sub.add_parser("project", help="write a 2D projection CSV")
    pj.add_argument("--data")
    pj.add_argument("--format", default="csv", choices=["csv", "binary"])
    pj.add_argument("--run")
    pj.add_argument("--fold", type=int, default=0)
    pj.add_argument("--network", type=int, default=1, choices=[1, 2])
    pj.add_argument("--out", required=True)
    pj.add_argument("overrides", nargs="*", metavar="key=value")
    pj.set_defaults(func=cmd_project)

    x = sub.add_parser("export", help="copy run artifacts out of a run directory")
    x.add_argument("--run", required=True)
    x.add_argument("--what", required=True,
                   choices=["network1", "network2", "events", "results", "config", "split"])
    x.add_argument("--fold", type=int, default=0)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export)
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except KeyboardInterrupt:
        return 130
    except Exception as exc:
        print(json.dumps({"error": f"{type(exc).__name__}: {exc}"}), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
