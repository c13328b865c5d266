"""Drive an interactive run over HTTP the way an annotation UI would.

Starts a run with a human-in-the-loop oracle and a local HTTP service,
then plays the annotator: poll /status, and whenever the run parks in
WAITING_FOR_LABELS, answer the pending queries through POST /labels.
Here the "human" just reads the true class from the dataset.
"""

import json
import time
import urllib.request

from opal.data import make_blob_dataset
from opal.server import RunSession, make_server, serve_forever
from opal.trainer import RunConfig


def get(base, path):
    with urllib.request.urlopen(base + path, timeout=5) as resp:
        body = resp.read().decode()
    return json.loads(body) if resp.headers.get_content_type() == "application/json" else body


def post(base, path, payload):
    req = urllib.request.Request(
        base + path, data=json.dumps(payload).encode(),
        headers={"Content-Type": "application/json"}, method="POST")
    with urllib.request.urlopen(req, timeout=5) as resp:
        return json.loads(resp.read().decode())


def main(tmp="/tmp/annotation_demo"):
    ds = make_blob_dataset(n=120, d=6, num_classes=3, seed=2,
                           center_scale=0.8, within_sigma=0.15)
    cfg = RunConfig(
        n_epochs=20, w_epochs=4, e_int=2, k_active=2, n_active=4,
        labeled_frac=0.08, fold_count=2, seed=1, batch_size=16,
        perplexity=8.0, tsne_iters=40, tsne_ee_iters=15,
        tsne_momentum_switch=15, tsne_kl_every=20,
        metric_fracs=(0.1,), oracle="interactive", oracle_timeout=30.0,
    ).validate()

    session = RunSession(ds, cfg, tmp)
    server = make_server(session)
    serve_forever(server)
    base = f"http://127.0.0.1:{server.server_address[1]}"
    print(f"service at {base}, run {session.run_id}")
    session.start()

    answered = 0
    truth = {int(s): int(ds.labels[ds.row_of(int(s))]) for s in ds.ids}
    while True:
        status = get(base, "/status")
        if status["phase"] == "DONE":
            break
        if status["phase"] == "FAILED":
            raise SystemExit(f"run failed: {status.get('error')}")
        if status["phase"] == "WAITING_FOR_LABELS" and status["pending_queries"]:
            items = {str(q["id"]): truth[q["id"]] for q in status["pending_queries"]}
            print(f"fold {status['fold']} epoch {status['epoch']}: "
                  f"asked about {sorted(items)} "
                  f"(suggested {[q['suggested'] for q in status['pending_queries']]})")
            out = post(base, "/labels", {
                "run_id": status["run_id"],
                "query_epoch": status["query_epoch"],
                "labels": items,
            })
            answered += len(out["accepted"])
        time.sleep(0.05)

    results = get(base, "/status")["results"]
    print(f"\nanswered {answered} queries; run DONE")
    print(f"mean accuracy {results['mean_accuracy']:.4f} "
          f"mean kappa {results['mean_kappa']:.4f}")
    server.shutdown()


if __name__ == "__main__":
    main()
