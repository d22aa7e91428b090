"""Corpus pipeline walkthrough: parsing, mention tags, tokenization, and
label corrections.

Run:  python demos/02_data_pipeline.py
"""

from gapgrep.data import (
    CorrectionRecord,
    GapSample,
    Label,
    Mention,
    apply_corrections,
    insert_mention_tags,
)
from gapgrep.synthetic import generate_synthetic
from gapgrep.tokenizer import build_vocab, tokenize

# --- mention tags ----------------------------------------------------------
print("== sentinel tags around the labeled spans ==")
text = (
    "NHLer Gary Suter and Olympic-medalist Bob Suter are Dehner's uncles. "
    "His cousin is Minnesota Wild's alternate captain Ryan"
)
sample = GapSample(
    id="demo-1",
    text=text,
    pronoun=Mention("His", text.index("His cousin")),
    a=Mention("Bob Suter", text.index("Bob Suter")),
    b=Mention("Dehner", text.index("Dehner")),
    a_coref=True,
    b_coref=False,
)
tagged = insert_mention_tags(sample)
print(tagged.text)
print("stripping the tags restores the original:", tagged.strip() == text)

# --- tokenization ----------------------------------------------------------
print("\n== tokenization with span tiling ==")
corpus = generate_synthetic(200, seed=1)
vocab = build_vocab([s.text for s in corpus.samples] + [text], size=900)
tok = tokenize(tagged, vocab)
print(f"{len(tok)} tokens; pronoun range {tok.pronoun_range}, A range {tok.a_range}, B range {tok.b_range}")
rebuilt = "".join(tagged.text[s:e] for s, e in tok.spans)
print("concatenated token spans reproduce the tagged text:", rebuilt == tagged.text)

# --- corrections ledger -----------------------------------------------------
print("\n== applying a corrections ledger ==")
samples = corpus.samples[:50]
flip = next(s for s in samples if s.label == Label.A)
corrections = [CorrectionRecord(flip.id, Label.A, Label.NEITHER, note="unambiguous from snippet")]
corrected, delta = apply_corrections(samples, corrections)
print(delta.format_table("demo-corpus"))
