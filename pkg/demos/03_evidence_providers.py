"""Evidence walkthrough: providers, the interchange file, token alignment.

Run:  python demos/03_evidence_providers.py
"""

import tempfile
from pathlib import Path

from gapgrep.data import insert_mention_tags
from gapgrep.evidence import (
    CorruptProvider,
    HeuristicParallelismProvider,
    OracleProvider,
    align_evidence,
    load_evidence,
    run_providers,
    write_evidence,
)
from gapgrep.synthetic import generate_synthetic
from gapgrep.tokenizer import build_vocab, tokenize

corpus = generate_synthetic(40, seed=7)
vocab = build_vocab([s.text for s in corpus.samples], size=700)
sample = corpus.samples[0]
print("snippet:", sample.text)
print("gold label:", sample.label.name)

# --- four stand-in providers ----------------------------------------------
oracle = OracleProvider(corpus.gold_evidence)
providers = [
    oracle,
    HeuristicParallelismProvider(),
    CorruptProvider(oracle, flip_rate=0.3, seed=1, name="noisy"),
    CorruptProvider(oracle, flip_rate=1.0, seed=2),  # adversarial
]
print("\n== provider clusters for the first sample ==")
for provider in providers:
    cluster = provider(sample)
    surfaces = [sample.text[o:o + l] for o, l in cluster.mentions]
    print(f"{cluster.provider:12} -> {surfaces}")

# --- the interchange file ----------------------------------------------------
print("\n== evidence file round trip ==")
clusters = run_providers(corpus.samples, providers)
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "evidence.jsonl"
    write_evidence(path, clusters)
    print("one line:", path.read_text().splitlines()[0])
    grouped = load_evidence(path, samples={s.id: s for s in corpus.samples},
                            provider_order=["oracle", "heuristic", "noisy", "adversarial"])
    print(f"{len(grouped)} samples, {len(grouped[sample.id])} providers each, order fixed by config")

# --- alignment to token ranges ----------------------------------------------
print("\n== aligning cluster mentions to token positions ==")
tok = tokenize(insert_mention_tags(sample), vocab)
aligned = align_evidence(grouped[sample.id], tok)
for cluster in aligned.clusters:
    print(f"{cluster.provider:12} token ranges {cluster.token_ranges} (dropped {cluster.dropped})")
