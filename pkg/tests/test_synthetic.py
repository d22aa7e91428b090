"""Synthetic corpus and NEITHER-row generator tests."""

import numpy as np
import pytest

from gapgrep.data import GENDER_BY_PRONOUN, Label, derive_label
from gapgrep.synthetic import (
    Document,
    SynthConfig,
    SynthesisError,
    generate_neither,
    generate_neither_corpus,
    generate_synthetic,
    label_from_evidence,
    make_documents,
)


class TestGenerateSynthetic:
    def test_minimal_size_covers_classes_by_gender(self):
        corpus = generate_synthetic(6, seed=1)
        cells = {(s.label, s.gender) for s in corpus.samples}
        assert len(cells) == 6

    def test_size_below_minimum(self):
        with pytest.raises(SynthesisError):
            generate_synthetic(5)

    def test_class_histogram_matches_mix(self):
        config = SynthConfig(class_mix=(0.5, 0.3, 0.2))
        corpus = generate_synthetic(200, config, seed=2)
        counts = {l: 0 for l in Label}
        for s in corpus.samples:
            counts[s.label] += 1
        assert abs(counts[Label.A] - 100) <= 1
        assert abs(counts[Label.B] - 60) <= 1
        assert abs(counts[Label.NEITHER] - 40) <= 1

    def test_gender_balance(self):
        corpus = generate_synthetic(501, seed=3)
        m = sum(1 for s in corpus.samples if s.gender == "M")
        assert abs(m - (501 - m)) <= 1

    def test_difficulty_fraction(self):
        corpus = generate_synthetic(400, SynthConfig(hard_fraction=0.5), seed=4)
        hard = len(corpus.hard_ids())
        assert abs(hard - 200) <= len(Label) * 2

    def test_offsets_validate(self):
        corpus = generate_synthetic(100, seed=5)
        for s in corpus.samples:
            s.validate()

    def test_gold_evidence_fully_resolves(self):
        corpus = generate_synthetic(1000, seed=6)
        for s in corpus.samples:
            assert label_from_evidence(s, corpus.gold_evidence[s.id]) == s.label

    def test_deterministic(self):
        c1 = generate_synthetic(50, seed=7)
        c2 = generate_synthetic(50, seed=7)
        assert c1.samples == c2.samples
        assert c1.gold_evidence == c2.gold_evidence

    def test_hard_samples_share_templates_across_classes(self):
        # The surface (with names/roles/pronouns slot-normalized) of hard
        # samples must be class-independent.
        corpus = generate_synthetic(600, seed=8)
        shapes = {l: set() for l in Label}
        for s in corpus.samples:
            if s.id not in corpus.hard_ids():
                continue
            shape = s.text.replace(s.a.text, "{a}").replace(s.b.text, "{b}").replace(s.pronoun.text + " ", "{p} ")
            for role in SynthConfig().roles:
                shape = shape.replace(role, "{role}")
            shapes[s.label].add(shape)
        assert shapes[Label.A] == shapes[Label.B] == shapes[Label.NEITHER]


def bag_of_words_logistic(train, test):
    """Tiny softmax regression over word counts: the surface-cue ceiling."""
    vocab = {}
    for s in train:
        for w in s.text.split():
            vocab.setdefault(w, len(vocab))

    def featurize(samples):
        x = np.zeros((len(samples), len(vocab) + 1))
        for i, s in enumerate(samples):
            for w in s.text.split():
                if w in vocab:
                    x[i, vocab[w]] += 1.0
            x[i, -1] = 1.0
        return x

    x_train, x_test = featurize(train), featurize(test)
    y = np.array([int(s.label) for s in train])
    w = np.zeros((x_train.shape[1], 3))
    for _ in range(300):
        logits = x_train @ w
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        grad = x_train.T @ (p - np.eye(3)[y]) / len(train)
        w -= 0.5 * grad
    preds = (x_test @ w).argmax(axis=1)
    return (preds == np.array([int(s.label) for s in test])).mean()


class TestContextInsufficiency:
    def test_bow_baseline_capped_but_evidence_resolves(self):
        config = SynthConfig(hard_fraction=0.5)
        train = generate_synthetic(1200, config, seed=9)
        test = generate_synthetic(400, config, seed=10)
        acc = bag_of_words_logistic(train.samples, test.samples)
        assert acc <= 0.70
        # Meanwhile the emitted evidence resolves every sample.
        for s in test.samples:
            assert label_from_evidence(s, test.gold_evidence[s.id]) == s.label


class TestGenerateNeither:
    def test_disjoint_clusters_produce_neither_row(self):
        text = "Anna met the crew. Bob joined later. Carla waved when she arrived."
        clusters = [
            ((text.index("she"), 3), (text.index("Carla"), 5)),
            ((text.index("Anna"), 4),),
            ((text.index("Bob"), 3),),
        ]
        doc = Document(text=text, clusters=clusters)
        sample = generate_neither(doc, np.random.default_rng(0), sid="n1")
        assert sample is not None
        assert derive_label(sample.a_coref, sample.b_coref) == Label.NEITHER
        assert {sample.a.text, sample.b.text} == {"Anna", "Bob"}
        sample.validate()

    def test_shared_mention_makes_cluster_ineligible(self):
        text = "Anna met the crew. Bob joined later. Carla waved when she arrived."
        anna = (text.index("Anna"), 4)
        clusters = [
            ((text.index("she"), 3), anna),  # pronoun cluster shares Anna
            (anna,),
            ((text.index("Bob"), 3),),
        ]
        doc = Document(text=text, clusters=clusters)
        # Only one eligible disjoint person cluster remains -> skip signal.
        assert generate_neither(doc, np.random.default_rng(0)) is None

    def test_no_pronoun_skips(self):
        doc = Document(text="Anna met Bob.", clusters=[((0, 4),), ((9, 3),)])
        assert generate_neither(doc, np.random.default_rng(0)) is None

    def test_documents_yield_rows(self):
        docs = make_documents(30, seed=11)
        rng = np.random.default_rng(12)
        produced = [generate_neither(d, rng, sid=f"n{i}") for i, d in enumerate(docs)]
        produced = [s for s in produced if s is not None]
        assert len(produced) >= 15
        for s in produced:
            assert s.label == Label.NEITHER
            assert s.pronoun.text.lower() in GENDER_BY_PRONOUN

    def test_target_counts_met_by_construction(self):
        rows = generate_neither_corpus(masculine=25, feminine=22, seed=13)
        m = sum(1 for s in rows if s.gender == "M")
        f = sum(1 for s in rows if s.gender == "F")
        assert (m, f) == (25, 22)
        assert len(rows) == 47
        for s in rows:
            s.validate()
            assert s.label == Label.NEITHER
