"""HTTP service around a live run: status, queries, labels, projections.

The service is a thin observation-and-annotation window. It never exposes
ground truth for unlabeled or pending samples; everything it serves comes
from the label store (seed/oracle labels), the propagation outputs
(pseudo-labels, confidence) or run bookkeeping.

Endpoints:

* ``GET /status``      run descriptor: phase, epoch, fold, budget use
* ``GET /queries``     pending annotation requests (empty unless waiting)
* ``POST /labels``     submit answers; idempotent per (run, query, id)
* ``GET /projection``  latest 2D snapshot CSV, ``?network=1|2``
* ``GET /metrics``     metric history recorded so far

POST /labels responds 404 for a wrong run id, 409 when an id is not
pending or re-posted with a different class, and 422 for malformed or
out-of-range labels. Re-posting an identical answer is acknowledged as a
no-op so clients can retry safely.
"""

from __future__ import annotations

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from . import trainer
from .selection import InteractiveOracle, LabelConflictError, NotPendingError

__all__ = ["RunSession", "make_server", "serve_forever"]


class RunSession:
    """Owns one run (fresh or resumed), its oracle and its live status."""

    def __init__(self, dataset, config, run_dir, resume=False):
        self.dataset = dataset
        self.config = config
        self.run_dir = Path(run_dir)
        digest = hashlib.sha256(
            (config.to_text() + self.run_dir.name).encode("utf-8")
        ).hexdigest()
        self.run_id = digest[:12]
        self.oracle = None
        if config.oracle == "interactive":
            self.oracle = InteractiveOracle(dataset.num_classes, timeout=config.oracle_timeout)
        self._lock = threading.Lock()
        self._resume = resume
        self._thread = None
        self._status = {
            "fold": None,
            "epoch": 0,
            "phase": "PENDING",
            "c_active": 0,
            "n_active": config.n_active,
            "labeled_count": 0,
            "pending_queries": [],
            "metrics_tail": [],
            "snapshots": {},
        }
        self.results = None
        self.error = None

    # -- training side --------------------------------------------------

    def _status_cb(self, snap):
        # a fold pushes DONE when it alone finishes; run-level DONE is set
        # in _run once every fold has results, so clients polling /status
        # never see DONE in the gap between folds and stop answering early
        if snap.get("phase") == trainer.DONE:
            snap = {**snap, "phase": trainer.MAIN}
        with self._lock:
            self._status.update(snap)

    def _oracle_factory(self, fold_index):
        return self.oracle

    def _run(self):
        factory = self._oracle_factory if self.oracle is not None else None
        try:
            if self._resume:
                out = trainer.resume_run(
                    self.run_dir, dataset=self.dataset,
                    oracle_factory=factory, status_cb=self._status_cb,
                )
            else:
                out = trainer.crossval_run(
                    self.dataset, self.config, run_dir=self.run_dir,
                    oracle_factory=factory, status_cb=self._status_cb,
                )
            with self._lock:
                self.results = out
                if not out.get("paused"):
                    self._status["phase"] = trainer.DONE
        except Exception as exc:  # surfaced via /status, not a dead socket
            with self._lock:
                self.error = f"{type(exc).__name__}: {exc}"
                self._status["phase"] = "FAILED"

    def start(self):
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        return self._thread

    def join(self, timeout=None):
        if self._thread is not None:
            self._thread.join(timeout)

    def done(self):
        return self._thread is not None and not self._thread.is_alive()

    # -- HTTP side -------------------------------------------------------

    def descriptor(self):
        with self._lock:
            snap = dict(self._status)
        pending = []
        if self.oracle is not None:
            view = self.oracle.pending_view()
            pending = view["items"]
            snap["query_epoch"] = view["query_epoch"]
        snap["pending_queries"] = pending
        snap["run_id"] = self.run_id
        snap["num_classes"] = self.dataset.num_classes
        snap["interactive"] = self.oracle is not None
        if self.error:
            snap["error"] = self.error
        if self.results is not None and not self.results.get("paused"):
            snap["results"] = self.results
        return snap

    def queries(self):
        if self.oracle is None:
            return {"query_epoch": None, "items": []}
        return self.oracle.pending_view()

    def metrics(self):
        with self._lock:
            return {
                "fold": self._status["fold"],
                "history": list(self._status["metrics_tail"]),
            }

    def projection_csv(self, network):
        with self._lock:
            path = self._status.get("snapshots", {}).get(network)
        if path is None:
            return None
        p = Path(path)
        if not p.exists():
            return None
        return p.read_text()

    def submit_labels(self, body):
        """Apply a label batch; returns (http_status, payload dict)."""
        if not isinstance(body, dict):
            return 422, {"error": "body must be a JSON object"}
        if body.get("run_id") not in (None, self.run_id):
            return 404, {"error": f"unknown run {body.get('run_id')!r}"}
        if self.oracle is None:
            return 409, {"error": "run is not interactive; no labels accepted"}
        labels = body.get("labels")
        if not isinstance(labels, dict) or not labels:
            return 422, {"error": "labels must be a non-empty object of id -> class"}
        epoch = body.get("query_epoch")
        parsed = []
        for sid_raw, label in labels.items():
            try:
                sid = int(sid_raw)
            except (TypeError, ValueError):
                return 422, {"error": f"bad sample id {sid_raw!r}"}
            if isinstance(label, bool) or not isinstance(label, int):
                return 422, {"error": f"label for id {sid} must be an integer class"}
            parsed.append((sid, label))
        accepted, noop = [], []
        for sid, label in parsed:
            try:
                outcome = self.oracle.submit(sid, label, query_epoch=epoch)
            except NotPendingError as exc:
                return 409, {"error": str(exc), "accepted": accepted, "noop": noop}
            except LabelConflictError as exc:
                return 409, {"error": str(exc), "accepted": accepted, "noop": noop}
            except ValueError as exc:
                return 422, {"error": str(exc), "accepted": accepted, "noop": noop}
            (accepted if outcome == "accepted" else noop).append(sid)
        return 200, {"accepted": accepted, "noop": noop}


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def session(self):
        return self.server.session

    def log_message(self, *args):
        pass

    def _send(self, code, payload, content_type="application/json"):
        if isinstance(payload, (dict, list)):
            raw = json.dumps(payload).encode("utf-8")
        else:
            raw = payload.encode("utf-8") if isinstance(payload, str) else payload
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(raw)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(raw)

    def do_OPTIONS(self):
        self._send(204, b"")

    def do_GET(self):
        url = urlparse(self.path)
        route = url.path.rstrip("/") or "/"
        if route == "/status":
            self._send(200, self.session.descriptor())
        elif route == "/queries":
            self._send(200, self.session.queries())
        elif route == "/metrics":
            self._send(200, self.session.metrics())
        elif route == "/projection":
            params = parse_qs(url.query)
            raw = params.get("network", ["1"])[0]
            if raw not in ("1", "2"):
                self._send(422, {"error": "network must be 1 or 2"})
                return
            csv_text = self.session.projection_csv(int(raw))
            if csv_text is None:
                self._send(404, {"error": "no projection snapshot yet"})
            else:
                self._send(200, csv_text, content_type="text/csv")
        elif route == "/":
            self._send(
                200,
                {
                    "run_id": self.session.run_id,
                    "endpoints": ["/status", "/queries", "/labels", "/projection", "/metrics"],
                },
            )
        else:
            self._send(404, {"error": f"no such endpoint {route}"})

    def do_POST(self):
        url = urlparse(self.path)
        route = url.path.rstrip("/")
        if route != "/labels":
            self._send(404, {"error": f"no such endpoint {route}"})
            return
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            body = json.loads(raw.decode("utf-8")) if raw else {}
        except (UnicodeDecodeError, json.JSONDecodeError):
            self._send(400, {"error": "body is not valid JSON"})
            return
        code, payload = self.session.submit_labels(body)
        self._send(code, payload)


def make_server(session, host="127.0.0.1", port=0):
    """Bind a threaded HTTP server to the session; port 0 picks a free one."""
    server = ThreadingHTTPServer((host, port), _Handler)
    server.daemon_threads = True
    server.session = session
    return server


def serve_forever(server):
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return thread
