"""Pronoun-token baseline classifier: pool the pronoun's representation from
the encoder's last layer and classify it with one linear layer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import EncoderConfig, EncoderParams, encode_batch, pad_batch
from .pooling import AttnPoolParams, pool_rows
from .tokenizer import TokenizedExample


@dataclass
class ProbertConfig:
    encoder: EncoderConfig
    # The strict formulation has no bias; the flag exists for fidelity runs.
    include_bias: bool = True

    def to_dict(self) -> dict:
        return {"encoder": self.encoder.to_dict(), "include_bias": self.include_bias}


@dataclass
class ProbertParams:
    w: Tensor  # (H, 3)
    b: Tensor  # (3,)
    pool: AttnPoolParams  # only exercised by multi-token pronoun ranges
    encoder: EncoderParams

    @classmethod
    def init(cls, config: ProbertConfig, rng: np.random.Generator) -> "ProbertParams":
        h = config.encoder.hidden
        return cls(
            w=ad.parameter(rng.normal(0, 0.02, (h, 3)), "probert.w"),
            b=ad.parameter(np.zeros(3), "probert.b"),
            pool=AttnPoolParams.init(h, rng, "probert.pool"),
            encoder=EncoderParams.init(config.encoder, rng),
        )

    def named(self) -> dict[str, Tensor]:
        out = self.encoder.named()
        out.update(self.pool.named("probert.pool"))
        out["probert.w"] = self.w
        out["probert.b"] = self.b
        return out


def pool_pronoun(e: Tensor, pronoun_range: tuple[int, int], pool_params: AttnPoolParams) -> Tensor:
    """Single-token pronouns are copied verbatim; longer ranges are pooled."""
    return pool_rows(e, pronoun_range[0], pronoun_range[1], pool_params)


def classify_probert(e_p: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """softmax(W^T E_p [+ b]) over (A, B, NEITHER)."""
    h = e_p.shape[0]
    logits = ad.matmul(ad.reshape(e_p, (1, h)), w)
    if b is not None:
        logits = ad.add(logits, b)
    return ad.reshape(ad.softmax(logits, axis=-1), (3,))


class ProbertModel:
    """Encoder + pronoun pooling + linear classification head."""

    kind = "probert"

    def __init__(self, config: ProbertConfig, seed: int = 0, params: ProbertParams | None = None):
        self.config = config
        self.params = params or ProbertParams.init(config, ad.rng_stream(seed, 1))

    def named_params(self) -> dict[str, Tensor]:
        return self.params.named()

    def trainable_params(self) -> dict[str, Tensor]:
        frozen = set()
        if self.config.encoder.freeze_layers > 0:
            all_enc = self.params.encoder.named()
            trainable_enc = self.params.encoder.trainable(self.config.encoder.freeze_layers)
            frozen = set(all_enc) - set(trainable_enc)
        return {k: v for k, v in self.named_params().items() if k not in frozen}

    def forward(self, toks: list[TokenizedExample], evidence=None, training=False, rng=None, capture_trace=False):
        ids, mask = pad_batch(toks)
        x = encode_batch(ids, mask, self.params.encoder, self.config.encoder, training=training, rng=rng)
        rows = []
        for i, tok in enumerate(toks):
            e = ad.index0(x, i)
            e_p = pool_pronoun(e, tok.pronoun_range, self.params.pool)
            rows.append(classify_probert(e_p, self.params.w, self.params.b if self.config.include_bias else None))
        out = ad.stack_rows(rows) if len(rows) > 1 else ad.reshape(rows[0], (1, 3))
        return out, None

    def predict_probs(self, toks, evidence=None, batch_size: int = 32) -> np.ndarray:
        rows = []
        with ad.no_grad():
            for i in range(0, len(toks), batch_size):
                probs, _ = self.forward(toks[i:i + batch_size], training=False)
                rows.append(probs.data)
        return np.concatenate(rows, axis=0)
