"""Evidence-pooling tests: brute-force oracles for every stage plus the
module-level invariants (normalization, permutation, padding, fallback)."""

import math

import numpy as np
import pytest

from gapgrep import autodiff as ad
from gapgrep.data import insert_mention_tags
from gapgrep.encoder import EncoderConfig
from gapgrep.evidence import AlignedEvidence, OracleProvider, align_evidence, run_providers
from gapgrep.pooling import (
    AttnPoolParams,
    CascadeParams,
    EmptyPoolError,
    GrepConfig,
    GrepModel,
    attn_pool,
    cascade,
    classify_grep,
    pool_hierarchy,
)
from gapgrep.synthetic import generate_synthetic
from gapgrep.tokenizer import build_vocab, tokenize


def attn_pool_oracle(e, w, b, u):
    """Independent score -> softmax -> weighted-sum computation."""
    scores = np.tanh(e @ w + b) @ u
    ex = np.exp(scores - scores.max())
    weights = ex / ex.sum()
    return weights @ e, weights


def mha_oracle_loop(q, k, v, p, heads):
    h = q.shape[-1]
    d = h // heads
    qq, kk, vv = q @ p.wq.data, k @ p.wk.data, v @ p.wv.data
    outs = []
    for i in range(heads):
        qs, ks, vs = qq[:, i * d:(i + 1) * d], kk[:, i * d:(i + 1) * d], vv[:, i * d:(i + 1) * d]
        s = qs @ ks.T / math.sqrt(d)
        e = np.exp(s - s.max(axis=-1, keepdims=True))
        outs.append((e / e.sum(axis=-1, keepdims=True)) @ vs)
    return np.concatenate(outs, axis=-1) @ p.wo.data


def cascade_oracle(a_p, a_a, a_b, cluster, params, heads):
    """Straight-line loop version of the three-stage cascade."""
    def stage(query, keys, st):
        out = mha_oracle_loop(query.reshape(1, -1), keys, keys, st.mha, heads)
        return np.tanh(out @ st.ffn_w.data + st.ffn_b.data)

    c_p = stage(a_p, cluster, params.stage_p)
    c_a = stage(a_a, c_p, params.stage_a)
    c_b = stage(a_b, c_a, params.stage_b)
    return c_b[0]


class TestAttnPool:
    def _params(self, h=8, seed=0):
        return AttnPoolParams.init(h, np.random.default_rng(seed), "pool")

    def test_singleton(self):
        p = self._params()
        row = np.random.default_rng(1).normal(size=8)
        out, w = attn_pool(ad.Tensor(row.reshape(1, 8)), p)
        np.testing.assert_array_equal(out.data, row)
        np.testing.assert_array_equal(w, [1.0])

    def test_identical_rows_uniform(self):
        p = self._params()
        row = np.random.default_rng(2).normal(size=8)
        out, w = attn_pool(ad.Tensor(np.tile(row, (4, 1))), p)
        np.testing.assert_allclose(w, 0.25, atol=1e-12)
        np.testing.assert_allclose(out.data, row, atol=1e-12)

    def test_matches_brute_force(self):
        p = self._params(seed=3)
        e = np.random.default_rng(4).normal(size=(3, 8))
        out, w = attn_pool(ad.Tensor(e), p)
        expected, expected_w = attn_pool_oracle(e, p.w.data, p.b.data, p.u.data)
        np.testing.assert_allclose(out.data, expected, atol=1e-12)
        np.testing.assert_allclose(w, expected_w, atol=1e-12)

    def test_weights_sum_to_one_randomized(self):
        rng = np.random.default_rng(5)
        p = self._params(seed=6)
        for _ in range(200):
            t = int(rng.integers(1, 7))
            e = rng.normal(scale=3, size=(t, 8))
            _, w = attn_pool(ad.Tensor(e), p)
            np.testing.assert_allclose(w.sum(), 1.0, atol=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(EmptyPoolError):
            attn_pool(ad.Tensor(np.zeros((0, 8))), self._params())

    def test_gradient(self):
        p = self._params(seed=7)
        e = ad.parameter(np.random.default_rng(8).normal(size=(3, 8)), "e")
        params = {"e": e, **p.named("pool")}
        err = ad.grad_check(lambda: ad.sum_axis(ad.tanh(attn_pool(e, p)[0])), params, step=1e-5)
        assert err < 1e-4


class TestCascade:
    def _params(self, h=8, heads=2, seed=0):
        return CascadeParams.init(h, heads, np.random.default_rng(seed))

    def test_identity_projection_single_mention(self):
        h = 8
        params = self._params(h=h, heads=2, seed=1)
        for st in (params.stage_p, params.stage_a, params.stage_b):
            st.mha.wq.data[...] = np.eye(h)
            st.mha.wk.data[...] = np.eye(h)
            st.mha.wv.data[...] = np.eye(h)
            st.mha.wo.data[...] = np.eye(h)
        v = np.random.default_rng(2).normal(size=h)
        a_p = ad.Tensor(v)
        cluster = ad.Tensor(v.reshape(1, h))
        c_b, trace = cascade(a_p, ad.Tensor(v), ad.Tensor(v), cluster, params)
        # Single-key attention weight is 1 at every stage, so the cascade is
        # three FFNs applied to the (identity-projected) mention.
        expected = v
        for st in (params.stage_p, params.stage_a, params.stage_b):
            expected = np.tanh(expected @ st.ffn_w.data + st.ffn_b.data)
        np.testing.assert_allclose(c_b.data[0], expected, atol=1e-12)
        np.testing.assert_array_equal(trace.mention_weights, [1.0])

    def test_stage23_singleton_weight_is_one_regardless_of_query(self):
        from gapgrep.attention import multi_head_attention

        params = self._params(seed=3)
        key = ad.Tensor(np.random.default_rng(4).normal(size=(1, 8)))
        outs = []
        for qseed in (5, 6, 7):
            q = ad.Tensor(np.random.default_rng(qseed).normal(size=(1, 8)))
            out, w = multi_head_attention(q, key, key, params.stage_a.mha)
            np.testing.assert_array_equal(w, np.ones_like(w))
            outs.append(out.data.copy())
        np.testing.assert_array_equal(outs[0], outs[1])
        np.testing.assert_array_equal(outs[1], outs[2])

    def test_matches_straight_line_oracle(self):
        rng = np.random.default_rng(8)
        params = self._params(seed=9)
        a_p, a_a, a_b = rng.normal(size=8), rng.normal(size=8), rng.normal(size=8)
        cluster = rng.normal(size=(4, 8))
        c_b, trace = cascade(ad.Tensor(a_p), ad.Tensor(a_a), ad.Tensor(a_b), ad.Tensor(cluster), params)
        expected = cascade_oracle(a_p, a_a, a_b, cluster, params, heads=2)
        np.testing.assert_allclose(c_b.data[0], expected, atol=1e-12)
        np.testing.assert_allclose(trace.mention_weights.sum(), 1.0, atol=1e-12)

    def test_mention_permutation_invariance(self):
        rng = np.random.default_rng(10)
        params = self._params(seed=11)
        qs = [ad.Tensor(rng.normal(size=8)) for _ in range(3)]
        cluster = rng.normal(size=(5, 8))
        c1, _ = cascade(*qs, ad.Tensor(cluster), params)
        c2, _ = cascade(*qs, ad.Tensor(cluster[::-1].copy()), params)
        np.testing.assert_allclose(c1.data, c2.data, atol=1e-12)

    def test_empty_cluster_rejected(self):
        params = self._params()
        z = ad.Tensor(np.zeros(8))
        with pytest.raises(EmptyPoolError):
            cascade(z, z, z, ad.Tensor(np.zeros((0, 8))), params)

    def test_re_attend_variant_runs(self):
        rng = np.random.default_rng(12)
        params = self._params(seed=13)
        qs = [ad.Tensor(rng.normal(size=8)) for _ in range(3)]
        cluster = ad.Tensor(rng.normal(size=(3, 8)))
        c_default, _ = cascade(*qs, cluster, params, re_attend=False)
        c_re, _ = cascade(*qs, cluster, params, re_attend=True)
        assert not np.allclose(c_default.data, c_re.data)


class TestPoolHierarchy:
    def _pools(self, h=8):
        rng = np.random.default_rng(14)
        return AttnPoolParams.init(h, rng, "c"), AttnPoolParams.init(h, rng, "p")

    def test_single_provider_passthrough(self):
        cluster_pool, provider_pool = self._pools()
        vec = np.random.default_rng(15).normal(size=8)
        a_co, pw, cw = pool_hierarchy([ad.Tensor(vec.reshape(1, 8))], cluster_pool, provider_pool)
        np.testing.assert_allclose(a_co.data, vec, atol=1e-12)
        np.testing.assert_array_equal(pw, [1.0])
        assert len(cw) == 1 and cw[0].tolist() == [1.0]

    def test_zero_providers_zero_vector(self):
        cluster_pool, provider_pool = self._pools()
        a_co, pw, cw = pool_hierarchy([], cluster_pool, provider_pool)
        np.testing.assert_array_equal(a_co.data, np.zeros(8))
        assert pw.size == 0 and cw == []

    def test_provider_permutation_invariance(self):
        cluster_pool, provider_pool = self._pools()
        rng = np.random.default_rng(16)
        vecs = [ad.Tensor(rng.normal(size=(1, 8))) for _ in range(4)]
        a1, w1, _ = pool_hierarchy(vecs, cluster_pool, provider_pool)
        perm = [2, 0, 3, 1]
        a2, w2, _ = pool_hierarchy([vecs[i] for i in perm], cluster_pool, provider_pool)
        np.testing.assert_allclose(a1.data, a2.data, atol=1e-12)
        np.testing.assert_allclose(w1[perm], w2, atol=1e-12)


class TestClassifyGrep:
    def test_zero_params_uniform(self):
        rng = np.random.default_rng(17)
        probs = classify_grep(ad.Tensor(rng.normal(size=8)), ad.Tensor(rng.normal(size=8)), ad.Tensor(np.zeros((16, 3))), ad.Tensor(np.zeros(3)))
        np.testing.assert_allclose(probs.data, [1 / 3] * 3, atol=1e-12)

    def test_zero_evidence_reduces_to_first_block(self):
        rng = np.random.default_rng(18)
        e_p = rng.normal(size=8)
        w = rng.normal(size=(16, 3))
        b = rng.normal(size=3)
        probs = classify_grep(ad.Tensor(e_p), ad.Tensor(np.zeros(8)), ad.Tensor(w), ad.Tensor(b))
        logits = e_p @ w[:8] + b
        ex = np.exp(logits - logits.max())
        np.testing.assert_allclose(probs.data, ex / ex.sum(), atol=1e-12)

    def test_output_is_probability_row(self):
        rng = np.random.default_rng(19)
        probs = classify_grep(ad.Tensor(rng.normal(size=8)), ad.Tensor(rng.normal(size=8)), ad.Tensor(rng.normal(size=(16, 3))), ad.Tensor(rng.normal(size=3)))
        assert probs.shape == (3,)
        np.testing.assert_allclose(probs.data.sum(), 1.0, atol=1e-9)


@pytest.fixture(scope="module")
def grep_setup():
    corpus = generate_synthetic(80, seed=51)
    vocab = build_vocab([s.text for s in corpus.samples], size=600)
    toks = [tokenize(insert_mention_tags(s), vocab) for s in corpus.samples]
    oracle = OracleProvider(corpus.gold_evidence)
    from gapgrep.evidence import CorruptProvider

    adversarial = CorruptProvider(oracle, flip_rate=1.0, seed=3)
    by_id = {s.id: s for s in corpus.samples}
    evidence = [
        align_evidence(run_providers([by_id[t.id]], [oracle, adversarial]), t)
        for t in toks
    ]
    config = GrepConfig(
        encoder=EncoderConfig(vocab_size=vocab.size, hidden=16, layers=1, heads=2, max_len=128, dropout=0.0),
        ep_heads=2,
    )
    model = GrepModel(config, seed=0)
    return corpus, toks, evidence, model


class TestForwardGrep:
    def test_probability_rows_and_trace_normalization(self, grep_setup):
        _, toks, evidence, model = grep_setup
        probs, traces = model.forward(toks[:1], evidence[:1], capture_trace=True)
        np.testing.assert_allclose(probs.data.sum(axis=1), 1.0, atol=1e-9)
        trace = traces[0]
        np.testing.assert_allclose(sum(trace.provider_weights), 1.0, atol=1e-9)
        for w in trace.mention_weights:
            np.testing.assert_allclose(sum(w), 1.0, atol=1e-9)
        for w in trace.cluster_weights:
            np.testing.assert_allclose(sum(w), 1.0, atol=1e-9)
        assert trace.provider_names == ["oracle", "adversarial"]

    def test_padding_independence(self, grep_setup):
        _, toks, evidence, model = grep_setup
        solo, _ = model.forward(toks[:1], evidence[:1])
        padded, _ = model.forward(toks[:8], evidence[:8])
        np.testing.assert_allclose(solo.data[0], padded.data[0], atol=1e-10)

    def test_provider_and_mention_permutation_invariance(self, grep_setup):
        _, toks, evidence, model = grep_setup
        base, _ = model.forward(toks[:4], evidence[:4])
        permuted = []
        for ev in evidence[:4]:
            clusters = [
                type(c)(
                    provider=c.provider,
                    token_ranges=list(reversed(c.token_ranges)),
                    mask=c.mask,
                    dropped=c.dropped,
                    mentions_kept=list(reversed(c.mentions_kept)),
                )
                for c in reversed(ev.clusters)
            ]
            permuted.append(AlignedEvidence(sample_id=ev.sample_id, clusters=clusters))
        out, _ = model.forward(toks[:4], permuted)
        np.testing.assert_allclose(base.data, out.data, atol=1e-10)

    def test_zero_provider_fallback_ignores_evidence_block(self, grep_setup):
        _, toks, _, model = grep_setup
        empty = [AlignedEvidence(sample_id=t.id, clusters=[]) for t in toks[:3]]
        base, _ = model.forward(toks[:3], empty)
        # Scramble the evidence half of the classifier: with N=0 the output
        # must not move.
        w = model.params.w_clf.data
        saved = w.copy()
        h = model.config.encoder.hidden
        w[h:] = np.random.default_rng(20).normal(size=(h, 3))
        scrambled, _ = model.forward(toks[:3], empty)
        w[...] = saved
        np.testing.assert_allclose(base.data, scrambled.data, atol=1e-12)

    def test_duplicated_provider_keeps_probabilities_normalized(self, grep_setup):
        _, toks, evidence, model = grep_setup
        doubled = [
            AlignedEvidence(sample_id=ev.sample_id, clusters=ev.clusters + [ev.clusters[0]])
            for ev in evidence[:3]
        ]
        probs, _ = model.forward(toks[:3], doubled)
        assert np.isfinite(probs.data).all()
        np.testing.assert_allclose(probs.data.sum(axis=1), 1.0, atol=1e-9)

    def test_empty_cluster_uses_null_mention(self, grep_setup):
        _, toks, _, model = grep_setup
        from gapgrep.evidence import AlignedCluster

        ev = [AlignedEvidence(sample_id=toks[0].id, clusters=[AlignedCluster(provider="empty", token_ranges=[], mask=[False], dropped=1)])]
        probs, traces = model.forward(toks[:1], ev, capture_trace=True)
        np.testing.assert_allclose(probs.data.sum(axis=1), 1.0, atol=1e-9)
        assert traces[0].mention_weights == [[1.0]]

    def test_full_graph_gradient(self, grep_setup):
        _, toks, evidence, model = grep_setup
        gold = np.array([int(t.label) for t in toks[:2]])

        def f():
            probs, _ = model.forward(toks[:2], evidence[:2])
            return ad.cross_entropy(probs, gold)

        err = ad.grad_check(f, model.trainable_params(), step=1e-5, max_per_param=10)
        assert err < 1e-4

    def test_raw_token_keys_variant_runs(self, grep_setup):
        corpus, toks, evidence, model = grep_setup
        config = GrepConfig(
            encoder=model.config.encoder,
            ep_heads=2,
            raw_token_keys=True,
        )
        variant = GrepModel(config, seed=1)
        probs, _ = variant.forward(toks[:2], evidence[:2])
        np.testing.assert_allclose(probs.data.sum(axis=1), 1.0, atol=1e-9)

    def test_separate_pab_pool_flag(self, grep_setup):
        _, toks, evidence, model = grep_setup
        shared = GrepModel(GrepConfig(encoder=model.config.encoder, ep_heads=2), seed=5)
        assert shared.params.pab_pool is shared.params.mention_pool
        assert "ep.pab_pool.w" not in shared.named_params()
        split = GrepModel(GrepConfig(encoder=model.config.encoder, ep_heads=2, separate_pab_pool=True), seed=5)
        assert split.params.pab_pool is not split.params.mention_pool
        assert "ep.pab_pool.w" in split.named_params()
        probs, _ = split.forward(toks[:2], evidence[:2])
        np.testing.assert_allclose(probs.data.sum(axis=1), 1.0, atol=1e-9)

    def test_freeze_layers_excludes_bottom_of_encoder(self, grep_setup):
        _, _, _, model = grep_setup
        from dataclasses import replace

        frozen_cfg = GrepConfig(encoder=replace(model.config.encoder, freeze_layers=1), ep_heads=2)
        frozen = GrepModel(frozen_cfg, seed=6)
        trainable = frozen.trainable_params()
        assert "enc.tok_emb" not in trainable and "enc.block0.mha.wq" not in trainable
        assert "ep.w_clf" in trainable
