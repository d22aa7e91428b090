"""Model walkthrough: train the pronoun baseline and the evidence-pooling
classifier on a small synthetic corpus and compare them.

Takes a couple of minutes on a laptop.
Run:  python demos/04_models_and_training.py
"""

import numpy as np

from gapgrep.data import Label
from gapgrep.encoder import EncoderConfig
from gapgrep.evidence import OracleProvider
from gapgrep.metrics import accuracy, class_recall, confusion_compare, gap_f1
from gapgrep.synthetic import generate_synthetic
from gapgrep.tokenizer import build_vocab
from gapgrep.training import TrainConfig, build_model, prepare_dataset, train

train_c = generate_synthetic(600, seed=11, id_prefix="tr")
val_c = generate_synthetic(150, seed=12, id_prefix="va")
test_c = generate_synthetic(200, seed=13, id_prefix="te")
vocab = build_vocab([s.text for s in train_c.samples], size=900)
encoder = EncoderConfig(vocab_size=vocab.size, hidden=64, layers=2, heads=4, max_len=64, dropout=0.1)

def with_oracle(corpus):
    oracle = OracleProvider(corpus.gold_evidence)
    return {s.id: [oracle(s)] for s in corpus.samples}

datasets = {
    "train": prepare_dataset(train_c.samples, vocab, with_oracle(train_c), max_len=64),
    "val": prepare_dataset(val_c.samples, vocab, with_oracle(val_c), max_len=64),
    "test": prepare_dataset(test_c.samples, vocab, with_oracle(test_c), max_len=64),
}

predictions = {}
for kind in ("probert", "grep"):
    config = TrainConfig(model=kind, encoder=encoder, batch_size=16, lr=3e-4,
                         eval_every=40, patience=4, max_steps=700, seed=42)
    model = build_model(config)
    result = train(model, datasets["train"], datasets["val"], config)
    probs = model.predict_probs(datasets["test"].toks, datasets["test"].evidence)
    predictions[kind] = {s.id: probs[i] for i, s in enumerate(datasets["test"].samples)}
    print(f"{kind}: stopped at step {result.steps}, best val logloss {result.best_val_loss:.3f}")

test_samples = datasets["test"].samples
hard_ids = test_c.hard_ids()
hard = [s for s in test_samples if s.id in hard_ids]
print("\n== context-insufficient subset: where the evidence pays off ==")
for kind in ("probert", "grep"):
    overall = accuracy(predictions[kind], test_samples)
    on_hard = accuracy(predictions[kind], hard)
    n_recall = class_recall(predictions[kind], test_samples, Label.NEITHER)
    print(f"{kind:8} overall={overall:.3f}  hard={on_hard:.3f}  NEITHER recall={n_recall:.3f}")

print("\n== gendered F1 report (evidence-pooling model) ==")
print(gap_f1(predictions["grep"], test_samples).format_table("grep"))

print("\n== where one model fixes the other ==")
table = confusion_compare(predictions["probert"], predictions["grep"], test_samples)
print(table.format_table("probert", "grep"))
