"""HTTP review service backing the label-sanitization UI.

Read-mostly JSON API over a loaded corpus, its evidence clusters, exported
attention traces, and model predictions. The only mutation is POSTing a
label correction, which is durably appended to the corrections ledger
(event-sourced: current labels are the fold of the ledger over gold) before
the response is sent. Ledger writes are serialized by a lock; GET handlers
are pure functions of loaded state plus the ledger.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np

from .data import CorrectionRecord, GapSample, Label, load_corrections, now_timestamp
from .evidence import EvidenceCluster
from .metrics import gap_f1

PROVIDER_COLORS = 8  # color indices cycle


@dataclass
class ReviewState:
    samples: list[GapSample]
    corrections_path: Path
    evidence: dict[str, list[EvidenceCluster]] = field(default_factory=dict)
    traces: dict[str, dict] = field(default_factory=dict)
    probert_preds: dict[str, np.ndarray] = field(default_factory=dict)
    grep_preds: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.by_id = {s.id: s for s in self.samples}
        self.current: dict[str, Label] = {s.id: s.label for s in self.samples}
        self.corrected: set[str] = set()
        self._lock = threading.Lock()
        self.corrections_path = Path(self.corrections_path)
        if self.corrections_path.exists():
            for rec in load_corrections(self.corrections_path):
                if rec.sample_id in self.current:
                    self.current[rec.sample_id] = rec.new_label
                    self.corrected.add(rec.sample_id)

    def list_samples(self, page: int, page_size: int) -> dict:
        lo = (page - 1) * page_size
        window = self.samples[lo:lo + page_size]
        return {
            "total": len(self.samples),
            "page": page,
            "page_size": page_size,
            "samples": [
                {
                    "id": s.id,
                    "label": self.current[s.id].name,
                    "gold_label": s.label.name,
                    "gender": s.gender,
                    "corrected": s.id in self.corrected,
                }
                for s in window
            ],
        }

    def sample_detail(self, sid: str) -> dict | None:
        s = self.by_id.get(sid)
        if s is None:
            return None
        providers = []
        for i, cluster in enumerate(self.evidence.get(sid, [])):
            providers.append(
                {
                    "provider": cluster.provider,
                    "color": i % PROVIDER_COLORS,
                    "mentions": [
                        {"offset": o, "length": l, "text": s.text[o:o + l]} for o, l in cluster.mentions
                    ],
                }
            )
        probs = {}
        for name, preds in (("probert", self.probert_preds), ("grep", self.grep_preds)):
            probs[name] = [float(v) for v in preds[sid]] if sid in preds else None
        return {
            "id": s.id,
            "text": s.text,
            "url": s.url,
            "gender": s.gender,
            "spans": {
                "pronoun": {"text": s.pronoun.text, "offset": s.pronoun.offset},
                "a": {"text": s.a.text, "offset": s.a.offset},
                "b": {"text": s.b.text, "offset": s.b.offset},
            },
            "gold_label": s.label.name,
            "current_label": self.current[sid].name,
            "corrected": sid in self.corrected,
            "providers": providers,
            "trace": self.traces.get(sid),
            "probs": probs,
        }

    def submit_correction(self, sid: str, new_label: str, note: str) -> tuple[int, dict]:
        if sid not in self.by_id:
            return 404, {"error": f"unknown sample {sid}"}
        try:
            label = Label[new_label]
        except KeyError:
            return 400, {"error": f"invalid label {new_label!r}"}
        with self._lock:
            old = self.current[sid]
            if label == old:
                return 409, {"error": f"label is already {old.name}"}
            record = CorrectionRecord(sample_id=sid, old_label=old, new_label=label, note=note, timestamp=now_timestamp())
            # Durable append before acknowledging.
            with open(self.corrections_path, "a", encoding="utf-8") as fh:
                fh.write(record.to_json() + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self.current[sid] = label
            self.corrected.add(sid)
        return 200, {"ok": True, "record": json.loads(record.to_json())}

    def metrics(self) -> dict | None:
        preds = self.grep_preds or self.probert_preds
        if not preds:
            return None
        # Scored against the current (corrections-folded) labels.
        current_gold = [s.with_label(self.current[s.id]) for s in self.samples if s.id in preds]
        report = gap_f1(preds, current_gold)
        return report.to_dict()


def _guess_type(path: Path) -> str:
    return {
        ".html": "text/html; charset=utf-8",
        ".js": "application/javascript",
        ".css": "text/css",
        ".json": "application/json",
        ".svg": "image/svg+xml",
        ".ico": "image/x-icon",
    }.get(path.suffix, "application/octet-stream")


class ReviewHandler(BaseHTTPRequestHandler):
    state: ReviewState = None  # installed by make_server
    ui_dir: Path | None = None

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, code: int, payload: dict | bytes, content_type: str = "application/json"):
        body = payload if isinstance(payload, bytes) else json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()
        self.wfile.write(body)

    def do_OPTIONS(self):
        self._send(204, b"")

    def do_GET(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        try:
            if url.path == "/health":
                self._send(200, {"status": "ok", "samples": len(self.state.samples)})
            elif url.path == "/samples":
                q = parse_qs(url.query)
                page = max(1, int(q.get("page", ["1"])[0]))
                page_size = min(500, max(1, int(q.get("page_size", ["50"])[0])))
                self._send(200, self.state.list_samples(page, page_size))
            elif len(parts) == 2 and parts[0] == "samples":
                detail = self.state.sample_detail(parts[1])
                if detail is None:
                    self._send(404, {"error": f"unknown sample {parts[1]}"})
                else:
                    self._send(200, detail)
            elif url.path == "/metrics":
                report = self.state.metrics()
                if report is None:
                    self._send(404, {"error": "no predictions loaded"})
                else:
                    self._send(200, report)
            else:
                self._serve_static(url.path)
        except Exception as e:  # internal error surface
            self._send(500, {"error": str(e)})

    def _serve_static(self, path: str):
        if self.ui_dir is None:
            self._send(404, {"error": "not found"})
            return
        rel = path.lstrip("/") or "index.html"
        target = (self.ui_dir / rel).resolve()
        if not str(target).startswith(str(self.ui_dir.resolve())) or not target.is_file():
            target = self.ui_dir / "index.html"
        if target.is_file():
            self._send(200, target.read_bytes(), content_type=_guess_type(target))
        else:
            self._send(404, {"error": "not found"})

    def do_POST(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        if len(parts) == 3 and parts[0] == "samples" and parts[2] == "label":
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length)
            try:
                body = json.loads(raw.decode("utf-8"))
                new_label = body["new_label"]
                note = str(body.get("note", ""))
            except (json.JSONDecodeError, KeyError, UnicodeDecodeError):
                self._send(400, {"error": "body must be JSON with new_label (and optional note)"})
                return
            code, payload = self.state.submit_correction(parts[1], new_label, note)
            self._send(code, payload)
        else:
            self._send(404, {"error": "not found"})


def make_server(state: ReviewState, host: str = "127.0.0.1", port: int = 8490, ui_dir: str | Path | None = None) -> ThreadingHTTPServer:
    handler = type("BoundReviewHandler", (ReviewHandler,), {"state": state, "ui_dir": Path(ui_dir) if ui_dir else None})
    return ThreadingHTTPServer((host, port), handler)
