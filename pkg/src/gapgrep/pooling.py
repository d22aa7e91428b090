"""Evidence pooling: attention pooling, the query-conditioned cascade,
hierarchical reduction over clusters and providers, and the evidence-
augmented classifier.

A provider's cluster is reduced in stages: token-level pooling gives one
vector per mention; a three-stage transformer cascade transforms the
mention set conditioned on the pooled pronoun, candidate A, and candidate B
vectors; cluster- then provider-level attention pooling reduce everything
to a single evidence vector that is concatenated with the pronoun
representation for classification. Stages 2 and 3 attend over a singleton
by default (the previous stage's output); `re_attend` additionally exposes
the original mention vectors as keys. No layer norm or residuals anywhere
in the cascade.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .attention import MhaParams, multi_head_attention
from .autodiff import Tensor
from .encoder import EncoderConfig, EncoderParams, encode_batch, pad_batch
from .evidence import AlignedEvidence
from .tokenizer import TokenizedExample


class EmptyPoolError(ValueError):
    """attn_pool rejects empty input; callers substitute the null mention."""


@dataclass
class AttnPoolParams:
    """Scoring MLP (w, b) plus the vector u reducing positions to scalars."""

    w: Tensor
    b: Tensor
    u: Tensor

    @classmethod
    def init(cls, hidden: int, rng: np.random.Generator, prefix: str) -> "AttnPoolParams":
        # Variance-preserving init: pooling sits off the residual stream.
        std = hidden**-0.5
        return cls(
            w=ad.parameter(rng.normal(0, std, (hidden, hidden)), f"{prefix}.w"),
            b=ad.parameter(np.zeros(hidden), f"{prefix}.b"),
            u=ad.parameter(rng.normal(0, std, hidden), f"{prefix}.u"),
        )

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b, f"{prefix}.u": self.u}


def attn_pool(e: Tensor, params: AttnPoolParams, mask: np.ndarray | None = None) -> tuple[Tensor, np.ndarray]:
    """Score -> masked softmax -> weighted sum over the rows of e (T, H).

    Returns the pooled vector (H,) and the weights (T,). Empty input is an
    error; the caller owns the null-mention substitution.
    """
    if e.ndim != 2 or e.shape[0] == 0:
        raise EmptyPoolError(f"attn_pool needs a nonempty (T, H) matrix, got {e.shape}")
    t, h = e.shape
    scores = ad.reshape(ad.matmul(ad.tanh_affine(e, params.w, params.b), ad.reshape(params.u, (h, 1))), (t,))
    weights = ad.softmax(scores, axis=-1, mask=mask)
    pooled = ad.reshape(ad.matmul(ad.reshape(weights, (1, t)), e), (h,))
    return pooled, weights.data.copy()


def pool_rows(e: Tensor, lo: int, hi: int, params: AttnPoolParams) -> Tensor:
    """Pool token rows [lo, hi); a single row is returned verbatim."""
    if hi <= lo:
        raise EmptyPoolError(f"empty token range [{lo}, {hi})")
    rows = ad.narrow(e, 0, lo, hi - lo)
    if hi - lo == 1:
        return ad.reshape(rows, (e.shape[1],))
    return attn_pool(rows, params)[0]


@dataclass
class CascadeStage:
    mha: MhaParams
    ffn_w: Tensor
    ffn_b: Tensor

    @classmethod
    def init(cls, hidden: int, heads: int, rng: np.random.Generator, prefix: str) -> "CascadeStage":
        # No residuals or layer norm in the cascade, so each stage must
        # preserve signal scale on its own.
        return cls(
            mha=MhaParams.init(hidden, heads, rng, scale=None, prefix=f"{prefix}.mha"),
            ffn_w=ad.parameter(rng.normal(0, hidden**-0.5, (hidden, hidden)), f"{prefix}.ffn_w"),
            ffn_b=ad.parameter(np.zeros(hidden), f"{prefix}.ffn_b"),
        )

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = self.mha.named(f"{prefix}.mha")
        out[f"{prefix}.ffn_w"] = self.ffn_w
        out[f"{prefix}.ffn_b"] = self.ffn_b
        return out

    def apply(self, query: Tensor, keys: Tensor, dropout: float, training: bool, rng) -> tuple[Tensor, np.ndarray]:
        out, weights = multi_head_attention(
            query, keys, keys, self.mha, dropout_rate=dropout, training=training, rng=rng
        )
        return ad.tanh_affine(out, self.ffn_w, self.ffn_b), weights


@dataclass
class CascadeParams:
    stage_p: CascadeStage
    stage_a: CascadeStage
    stage_b: CascadeStage

    @classmethod
    def init(cls, hidden: int, heads: int, rng: np.random.Generator, prefix: str = "cascade") -> "CascadeParams":
        return cls(
            stage_p=CascadeStage.init(hidden, heads, rng, f"{prefix}.stage_p"),
            stage_a=CascadeStage.init(hidden, heads, rng, f"{prefix}.stage_a"),
            stage_b=CascadeStage.init(hidden, heads, rng, f"{prefix}.stage_b"),
        )

    def named(self, prefix: str = "cascade") -> dict[str, Tensor]:
        return {
            **self.stage_p.named(f"{prefix}.stage_p"),
            **self.stage_a.named(f"{prefix}.stage_a"),
            **self.stage_b.named(f"{prefix}.stage_b"),
        }


@dataclass
class CascadeTrace:
    mention_weights: np.ndarray  # stage-1 attention over cluster mentions, head-averaged
    c_p: np.ndarray
    c_a: np.ndarray
    c_b: np.ndarray


def cascade(
    a_p: Tensor,
    a_a: Tensor,
    a_b: Tensor,
    cluster: Tensor,
    params: CascadeParams,
    dropout: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
    re_attend: bool = False,
) -> tuple[Tensor, CascadeTrace]:
    """Three query-conditioned transformer stages over a cluster (T_n, H).

    Stage 1 attends the pooled pronoun over the mention vectors; stages 2
    and 3 feed candidates A and B as queries over the previous stage's
    output (a singleton unless `re_attend` re-exposes the mentions).
    """
    if cluster.ndim != 2 or cluster.shape[0] == 0:
        raise EmptyPoolError(f"cascade needs a nonempty cluster, got shape {cluster.shape}")
    h = cluster.shape[1]
    q_p, q_a, q_b = (ad.reshape(v, (1, h)) for v in (a_p, a_a, a_b))
    c_p, w1 = params.stage_p.apply(q_p, cluster, dropout, training, rng)
    keys_a = ad.concat([c_p, cluster], axis=0) if re_attend else c_p
    c_a, _ = params.stage_a.apply(q_a, keys_a, dropout, training, rng)
    keys_b = ad.concat([c_a, cluster], axis=0) if re_attend else c_a
    c_b, _ = params.stage_b.apply(q_b, keys_b, dropout, training, rng)
    trace = CascadeTrace(
        mention_weights=w1.mean(axis=0)[0],
        c_p=c_p.data[0].copy(),
        c_a=c_a.data[0].copy(),
        c_b=c_b.data[0].copy(),
    )
    return c_b, trace


def pool_hierarchy(
    per_provider: list[Tensor],
    cluster_pool: AttnPoolParams,
    provider_pool: AttnPoolParams,
) -> tuple[Tensor, np.ndarray, list[np.ndarray]]:
    """Reduce per-provider cascade outputs to one evidence vector.

    Each provider contributes a (k, H) matrix (k = 1 on the default path),
    pooled at the cluster level, then across providers. Zero providers give
    the zero vector, which reduces the final classifier to its pronoun-only
    block.
    """
    if not per_provider:
        h = cluster_pool.b.shape[0]
        return Tensor(np.zeros(h)), np.zeros(0), []
    cluster_weights: list[np.ndarray] = []
    pooled = []
    for c_b in per_provider:
        vec, w = attn_pool(c_b, cluster_pool)
        pooled.append(vec)
        cluster_weights.append(w)
    if len(pooled) == 1:
        stacked = ad.reshape(pooled[0], (1, -1))
    else:
        stacked = ad.stack_rows(pooled)
    a_co, provider_weights = attn_pool(stacked, provider_pool)
    return a_co, provider_weights, cluster_weights


def classify_grep(e_p: Tensor, a_co: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """softmax(W^T [E_p; A_co] + b) over (A, B, NEITHER)."""
    h = e_p.shape[0]
    feat = ad.concat([ad.reshape(e_p, (1, h)), ad.reshape(a_co, (1, h))], axis=1)
    logits = ad.matmul(feat, w)
    if b is not None:
        logits = ad.add(logits, b)
    return ad.reshape(ad.softmax(logits, axis=-1), (3,))


@dataclass
class EvidenceTrace:
    """Per-sample attention record exported to the review UI."""

    sample_id: str
    provider_names: list[str]
    provider_weights: list[float]
    cluster_weights: list[list[float]]
    mention_weights: list[list[float]]
    mention_spans: list[list[tuple[int, int]]]  # original-text (offset, length)
    a_co: list[float]
    stage_vectors: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "providers": [
                {
                    "provider": name,
                    "weight": self.provider_weights[i],
                    "cluster_weights": self.cluster_weights[i],
                    "mention_weights": self.mention_weights[i],
                    "mentions": [{"offset": o, "length": l} for o, l in self.mention_spans[i]],
                }
                for i, name in enumerate(self.provider_names)
            ],
            "evidence_vector": self.a_co,
        }


@dataclass
class GrepConfig:
    encoder: EncoderConfig
    ep_heads: int = 4
    dropout: float = 0.1
    re_attend: bool = False
    raw_token_keys: bool = False
    separate_pab_pool: bool = False
    drop_pronoun_mention: bool = False
    include_bias: bool = True

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("ep_heads", "dropout", "re_attend", "raw_token_keys", "separate_pab_pool", "drop_pronoun_mention", "include_bias")}
        out["encoder"] = self.encoder.to_dict()
        return out


@dataclass
class GrepParams:
    encoder: EncoderParams
    mention_pool: AttnPoolParams
    pab_pool: AttnPoolParams  # same object as mention_pool unless separated
    cluster_pool: AttnPoolParams
    provider_pool: AttnPoolParams
    cascade: CascadeParams
    w_clf: Tensor
    b_clf: Tensor
    null_mention: Tensor

    @classmethod
    def init(cls, config: GrepConfig, rng: np.random.Generator) -> "GrepParams":
        h = config.encoder.hidden
        mention_pool = AttnPoolParams.init(h, rng, "ep.mention_pool")
        pab_pool = AttnPoolParams.init(h, rng, "ep.pab_pool") if config.separate_pab_pool else mention_pool
        return cls(
            encoder=EncoderParams.init(config.encoder, rng),
            mention_pool=mention_pool,
            pab_pool=pab_pool,
            cluster_pool=AttnPoolParams.init(h, rng, "ep.cluster_pool"),
            provider_pool=AttnPoolParams.init(h, rng, "ep.provider_pool"),
            cascade=CascadeParams.init(h, config.ep_heads, rng, "ep.cascade"),
            w_clf=ad.parameter(rng.normal(0, 0.02, (2 * h, 3)), "ep.w_clf"),
            b_clf=ad.parameter(np.zeros(3), "ep.b_clf"),
            null_mention=ad.parameter(rng.normal(0, 0.02, h), "ep.null_mention"),
        )

    def named(self) -> dict[str, Tensor]:
        out = self.encoder.named()
        out.update(self.mention_pool.named("ep.mention_pool"))
        if self.pab_pool is not self.mention_pool:
            out.update(self.pab_pool.named("ep.pab_pool"))
        out.update(self.cluster_pool.named("ep.cluster_pool"))
        out.update(self.provider_pool.named("ep.provider_pool"))
        out.update(self.cascade.named("ep.cascade"))
        out["ep.w_clf"] = self.w_clf
        out["ep.b_clf"] = self.b_clf
        out["ep.null_mention"] = self.null_mention
        return out


def forward_grep(
    toks: list[TokenizedExample],
    evidence: list[AlignedEvidence],
    params: GrepParams,
    config: GrepConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
    capture_trace: bool = False,
) -> tuple[Tensor, list[EvidenceTrace] | None]:
    """Full evidence-pooling forward pass over a padded batch.

    Encode, pool the P/A/B mentions, pool and cascade each provider's
    cluster, reduce the hierarchy, classify on [E_p; A_co]. A sample with
    zero providers takes the zero-evidence path.
    """
    if len(toks) != len(evidence):
        raise ValueError(f"{len(toks)} examples but {len(evidence)} evidence entries")
    ids, mask = pad_batch(toks)
    x = encode_batch(ids, mask, params.encoder, config.encoder, training=training, rng=rng)
    h = config.encoder.hidden

    prob_rows = []
    traces: list[EvidenceTrace] = []
    for i, (tok, ev) in enumerate(zip(toks, evidence)):
        e = ad.index0(x, i)
        e_p = pool_rows(e, *tok.pronoun_range, params.pab_pool)
        a_a = pool_rows(e, *tok.a_range, params.pab_pool)
        a_b = pool_rows(e, *tok.b_range, params.pab_pool)

        per_provider = []
        cascade_traces = []
        for cluster in ev.clusters:
            if cluster.token_ranges:
                if config.raw_token_keys:
                    cluster_mat = ad.concat([ad.narrow(e, 0, lo, hi - lo) for lo, hi in cluster.token_ranges], axis=0)
                else:
                    mention_vecs = [pool_rows(e, lo, hi, params.mention_pool) for lo, hi in cluster.token_ranges]
                    if len(mention_vecs) == 1:
                        cluster_mat = ad.reshape(mention_vecs[0], (1, h))
                    else:
                        cluster_mat = ad.stack_rows(mention_vecs)
            else:
                cluster_mat = ad.reshape(params.null_mention, (1, h))
            c_b, ct = cascade(
                e_p, a_a, a_b, cluster_mat, params.cascade,
                dropout=config.dropout, training=training, rng=rng, re_attend=config.re_attend,
            )
            per_provider.append(c_b)
            cascade_traces.append(ct)

        a_co, provider_weights, cluster_weights = pool_hierarchy(per_provider, params.cluster_pool, params.provider_pool)
        probs = classify_grep(e_p, a_co, params.w_clf, params.b_clf if config.include_bias else None)
        prob_rows.append(probs)

        if capture_trace:
            traces.append(
                EvidenceTrace(
                    sample_id=tok.id,
                    provider_names=ev.provider_names,
                    provider_weights=[float(w) for w in provider_weights],
                    cluster_weights=[[float(v) for v in w] for w in cluster_weights],
                    mention_weights=[[float(v) for v in ct.mention_weights] for ct in cascade_traces],
                    mention_spans=[list(c.mentions_kept) for c in ev.clusters],
                    a_co=[float(v) for v in a_co.data],
                    stage_vectors=[
                        {"c_p": ct.c_p.tolist(), "c_a": ct.c_a.tolist(), "c_b": ct.c_b.tolist()}
                        for ct in cascade_traces
                    ],
                )
            )
    out = ad.stack_rows(prob_rows) if len(prob_rows) > 1 else ad.reshape(prob_rows[0], (1, 3))
    return out, (traces if capture_trace else None)


class GrepModel:
    """Evidence-pooling classifier bundling parameters and config."""

    kind = "grep"

    def __init__(self, config: GrepConfig, seed: int = 0, params: GrepParams | None = None):
        self.config = config
        self.params = params or GrepParams.init(config, ad.rng_stream(seed, 1))

    def named_params(self) -> dict[str, Tensor]:
        return self.params.named()

    def trainable_params(self) -> dict[str, Tensor]:
        frozen = set()
        if self.config.encoder.freeze_layers > 0:
            all_enc = self.params.encoder.named()
            trainable_enc = self.params.encoder.trainable(self.config.encoder.freeze_layers)
            frozen = set(all_enc) - set(trainable_enc)
        return {k: v for k, v in self.named_params().items() if k not in frozen}

    def forward(self, toks, evidence, training=False, rng=None, capture_trace=False):
        return forward_grep(toks, evidence, self.params, self.config, training=training, rng=rng, capture_trace=capture_trace)

    def predict_probs(self, toks, evidence, batch_size: int = 32) -> np.ndarray:
        rows = []
        with ad.no_grad():
            for i in range(0, len(toks), batch_size):
                probs, _ = self.forward(toks[i:i + batch_size], evidence[i:i + batch_size], training=False)
                rows.append(probs.data)
        return np.concatenate(rows, axis=0)
