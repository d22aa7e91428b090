"""Review-service walkthrough: serve a small corpus, browse it over HTTP,
submit one correction, and watch it land in the ledger.

Run:  python demos/05_review_service.py
"""

import json
import tempfile
import threading
import urllib.request
from pathlib import Path

import numpy as np

from gapgrep.data import Label
from gapgrep.evidence import CorruptProvider, HeuristicParallelismProvider, OracleProvider
from gapgrep.service import ReviewState, make_server
from gapgrep.synthetic import generate_synthetic

corpus = generate_synthetic(10, seed=21)
oracle = OracleProvider(corpus.gold_evidence)
providers = [oracle, HeuristicParallelismProvider(),
             CorruptProvider(oracle, 0.4, seed=1, name="noisy"), CorruptProvider(oracle, 1.0, seed=2)]
preds = {}
for s in corpus.samples:
    v = np.full(3, 0.08)
    v[int(s.label)] = 0.84
    preds[s.id] = v

with tempfile.TemporaryDirectory() as tmp:
    ledger = Path(tmp) / "corrections.jsonl"
    state = ReviewState(
        samples=corpus.samples,
        corrections_path=ledger,
        evidence={s.id: [p(s) for p in providers] for s in corpus.samples},
        grep_preds=preds,
        probert_preds=preds,
    )
    server = make_server(state, host="127.0.0.1", port=0)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    print("serving on", base)

    def get(path):
        with urllib.request.urlopen(base + path) as resp:
            return json.loads(resp.read())

    print("\nGET /health ->", get("/health"))
    listing = get("/samples?page=1&page_size=3")
    print(f"GET /samples -> {listing['total']} samples, first page ids:",
          [s["id"] for s in listing["samples"]])

    target = corpus.samples[0]
    detail = get(f"/samples/{target.id}")
    print(f"\nGET /samples/{target.id}:")
    print("  providers:", [(p["provider"], p["color"]) for p in detail["providers"]])
    print("  model probabilities:", {k: [round(x, 3) for x in v] for k, v in detail["probs"].items()})

    new_label = "NEITHER" if target.label != Label.NEITHER else "A"
    req = urllib.request.Request(
        f"{base}/samples/{target.id}/label",
        data=json.dumps({"new_label": new_label, "note": "demo correction"}).encode(),
        method="POST",
        headers={"Content-Type": "application/json"},
    )
    with urllib.request.urlopen(req) as resp:
        print(f"\nPOST label {target.label.name} -> {new_label}: HTTP {resp.status}")
    print("ledger now holds:", ledger.read_text().strip())
    print("GET /metrics ->", {k: round(v, 3) for k, v in get("/metrics").items() if isinstance(v, float)})

    server.shutdown()
    server.server_close()
