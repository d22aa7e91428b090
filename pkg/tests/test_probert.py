"""Pronoun-baseline head tests."""

import math

import numpy as np
import pytest

from gapgrep import autodiff as ad
from gapgrep.data import insert_mention_tags
from gapgrep.encoder import EncoderConfig
from gapgrep.pooling import AttnPoolParams
from gapgrep.probert import ProbertConfig, ProbertModel, classify_probert, pool_pronoun
from gapgrep.synthetic import generate_synthetic
from gapgrep.tokenizer import build_vocab, tokenize


@pytest.fixture(scope="module")
def pool_params():
    return AttnPoolParams.init(8, np.random.default_rng(0), "pool")


class TestPoolPronoun:
    def test_single_token_exact_copy(self, pool_params):
        e = ad.Tensor(np.random.default_rng(1).normal(size=(5, 8)))
        out = pool_pronoun(e, (2, 3), pool_params)
        np.testing.assert_array_equal(out.data, e.data[2])

    def test_identical_rows_pool_to_common_row(self, pool_params):
        row = np.random.default_rng(2).normal(size=8)
        e = ad.Tensor(np.stack([row, row]))
        out = pool_pronoun(e, (0, 2), pool_params)
        np.testing.assert_allclose(out.data, row, atol=1e-12)

    def test_two_token_range_is_convex_combination(self, pool_params):
        rng = np.random.default_rng(3)
        e = ad.Tensor(rng.normal(size=(2, 8)))
        out = pool_pronoun(e, (0, 2), pool_params)
        # Solve pooled = a*r0 + (1-a)*r1 and confirm a lands in [0, 1].
        diff = e.data[0] - e.data[1]
        alpha = float(np.dot(out.data - e.data[1], diff) / np.dot(diff, diff))
        np.testing.assert_allclose(out.data, alpha * e.data[0] + (1 - alpha) * e.data[1], atol=1e-10)
        assert 0.0 <= alpha <= 1.0

    def test_empty_range_rejected(self, pool_params):
        from gapgrep.pooling import EmptyPoolError

        with pytest.raises(EmptyPoolError):
            pool_pronoun(ad.Tensor(np.zeros((3, 8))), (1, 1), pool_params)


class TestClassifyProbert:
    def test_zero_weights_uniform(self):
        e_p = ad.Tensor(np.random.default_rng(4).normal(size=8))
        probs = classify_probert(e_p, ad.Tensor(np.zeros((8, 3))))
        np.testing.assert_allclose(probs.data, [1 / 3] * 3, atol=1e-12)

    def test_closed_form_logits(self):
        # logits (ln 2, 0, 0) -> (0.5, 0.25, 0.25)
        e_p = ad.Tensor([1.0, 0.0])
        w = ad.Tensor(np.array([[math.log(2), 0.0, 0.0], [0.0, 0.0, 0.0]]))
        probs = classify_probert(e_p, w)
        np.testing.assert_allclose(probs.data, [0.5, 0.25, 0.25], atol=1e-12)

    def test_probability_row_shape(self):
        rng = np.random.default_rng(5)
        probs = classify_probert(ad.Tensor(rng.normal(size=8)), ad.Tensor(rng.normal(size=(8, 3))))
        assert probs.shape == (3,)
        assert (probs.data >= 0).all()
        np.testing.assert_allclose(probs.data.sum(), 1.0, atol=1e-9)

    def test_logit_shift_invariance(self):
        rng = np.random.default_rng(6)
        e_p = ad.Tensor(rng.normal(size=8))
        w = ad.Tensor(rng.normal(size=(8, 3)))
        b = rng.normal(size=3)
        p1 = classify_probert(e_p, w, ad.Tensor(b))
        p2 = classify_probert(e_p, w, ad.Tensor(b + 7.5))
        np.testing.assert_allclose(p1.data, p2.data, atol=1e-9)


@pytest.fixture(scope="module")
def fixtures():
    corpus = generate_synthetic(60, seed=41)
    vocab = build_vocab([s.text for s in corpus.samples], size=600)
    toks = [tokenize(insert_mention_tags(s), vocab) for s in corpus.samples]
    config = ProbertConfig(encoder=EncoderConfig(vocab_size=vocab.size, hidden=16, layers=1, heads=2, max_len=128, dropout=0.0))
    return corpus, vocab, toks, ProbertModel(config, seed=0)


class TestProbertModel:
    def test_forward_rows_normalized(self, fixtures):
        _, _, toks, model = fixtures
        probs, traces = model.forward(toks[:8])
        assert traces is None
        assert probs.shape == (8, 3)
        np.testing.assert_allclose(probs.data.sum(axis=1), 1.0, atol=1e-9)

    def test_full_graph_gradient(self, fixtures):
        _, _, toks, model = fixtures
        gold = np.array([int(t.label) for t in toks[:2]])

        def f():
            probs, _ = model.forward(toks[:2])
            return ad.cross_entropy(probs, gold)

        err = ad.grad_check(f, model.trainable_params(), step=1e-5, max_per_param=16)
        assert err < 1e-4

    def test_zero_depth_grad_isolated_to_pronoun_tokens(self, fixtures):
        corpus, vocab, toks, _ = fixtures
        config = ProbertConfig(encoder=EncoderConfig(vocab_size=vocab.size, hidden=8, layers=0, heads=2, max_len=128, dropout=0.0))
        model = ProbertModel(config, seed=1)
        tok = toks[0]
        probs, _ = model.forward([tok])
        loss = ad.cross_entropy(probs, [int(tok.label)])
        for p in model.named_params().values():
            p.zero_grad()
        loss.backward()
        grad = model.params.encoder.tok_emb.grad
        pron_ids = set(tok.token_ids[tok.pronoun_range[0]:tok.pronoun_range[1]])
        other_ids = set(tok.token_ids) - pron_ids
        assert any(np.abs(grad[i]).max() > 0 for i in pron_ids)
        for i in other_ids:
            assert np.abs(grad[i]).max() == 0.0

    def test_checkpoint_roundtrip(self, fixtures, tmp_path):
        from gapgrep.checkpoint import load_checkpoint, restore_into, save_checkpoint

        _, _, toks, model = fixtures
        path = tmp_path / "probert.ckpt"
        save_checkpoint(path, model.named_params(), {"kind": "probert"})
        clone = ProbertModel(model.config, seed=99)
        values, _ = load_checkpoint(path)
        restore_into(clone.named_params(), values)
        p1, _ = model.forward(toks[:4])
        p2, _ = clone.forward(toks[:4])
        np.testing.assert_array_equal(p1.data, p2.data)
