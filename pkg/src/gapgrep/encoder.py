"""Per-token contextual embeddings: a small trainable transformer encoder
plus a loader for precomputed embeddings exported from any external LM.

The trainable encoder is a stand-in for a large fine-tuned language model:
token + learned positional embeddings through self-attention blocks with
residual connections and (flagged) layer normalization. The precomputed
path loads frozen embeddings so real-LM vectors can drive the heads without
hosting the LM.
"""

from __future__ import annotations

import json
import warnings
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .attention import MhaParams, multi_head_attention
from .autodiff import Tensor
from .tokenizer import PAD_ID, TokenizedExample, fit_window


class AlignmentError(ValueError):
    """Precomputed embeddings do not line up with the local tokenization."""


@dataclass
class EncoderConfig:
    vocab_size: int
    hidden: int = 64
    layers: int = 2
    heads: int = 4
    max_len: int = 256
    dropout: float = 0.1
    layernorm: bool = True
    # Freeze the bottom k blocks plus the embeddings (0 = train everything).
    freeze_layers: int = 0

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ValueError(f"hidden {self.hidden} not divisible by heads {self.heads}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("vocab_size", "hidden", "layers", "heads", "max_len", "dropout", "layernorm", "freeze_layers")}


@dataclass
class BlockParams:
    mha: MhaParams
    ffn_w: Tensor
    ffn_b: Tensor
    ln1_g: Tensor | None = None
    ln1_b: Tensor | None = None
    ln2_g: Tensor | None = None
    ln2_b: Tensor | None = None

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = self.mha.named(f"{prefix}.mha")
        out[f"{prefix}.ffn_w"] = self.ffn_w
        out[f"{prefix}.ffn_b"] = self.ffn_b
        for key in ("ln1_g", "ln1_b", "ln2_g", "ln2_b"):
            t = getattr(self, key)
            if t is not None:
                out[f"{prefix}.{key}"] = t
        return out


@dataclass
class EncoderParams:
    tok_emb: Tensor
    pos_emb: Tensor
    blocks: list[BlockParams] = field(default_factory=list)

    @classmethod
    def init(cls, config: EncoderConfig, rng: np.random.Generator) -> "EncoderParams":
        h = config.hidden
        scale = 0.02
        blocks = []
        for i in range(config.layers):
            block = BlockParams(
                mha=MhaParams.init(h, config.heads, rng, prefix=f"enc.block{i}.mha"),
                ffn_w=ad.parameter(rng.normal(0, scale, (h, h)), f"enc.block{i}.ffn_w"),
                ffn_b=ad.parameter(np.zeros(h), f"enc.block{i}.ffn_b"),
            )
            if config.layernorm:
                block.ln1_g = ad.parameter(np.ones(h), f"enc.block{i}.ln1_g")
                block.ln1_b = ad.parameter(np.zeros(h), f"enc.block{i}.ln1_b")
                block.ln2_g = ad.parameter(np.ones(h), f"enc.block{i}.ln2_g")
                block.ln2_b = ad.parameter(np.zeros(h), f"enc.block{i}.ln2_b")
            blocks.append(block)
        return cls(
            tok_emb=ad.parameter(rng.normal(0, scale, (config.vocab_size, h)), "enc.tok_emb"),
            pos_emb=ad.parameter(rng.normal(0, scale, (config.max_len, h)), "enc.pos_emb"),
            blocks=blocks,
        )

    def named(self) -> dict[str, Tensor]:
        out = {"enc.tok_emb": self.tok_emb, "enc.pos_emb": self.pos_emb}
        for i, block in enumerate(self.blocks):
            out.update(block.named(f"enc.block{i}"))
        return out

    def trainable(self, freeze_layers: int = 0) -> dict[str, Tensor]:
        if freeze_layers <= 0:
            return self.named()
        out = {}
        for i, block in enumerate(self.blocks):
            if i >= freeze_layers:
                out.update(block.named(f"enc.block{i}"))
        return out


@dataclass
class TokenEmbeddings:
    """T x H embedding matrix for one example."""

    matrix: Tensor
    source: str  # "toy" | "precomputed"

    @property
    def token_count(self) -> int:
        return self.matrix.shape[0]

    def validate(self, tok: TokenizedExample) -> None:
        if not np.isfinite(self.matrix.data).all():
            raise ValueError("embeddings contain NaN/Inf")
        if self.token_count != len(tok):
            raise AlignmentError(f"{tok.id}: {self.token_count} embedding rows vs {len(tok)} tokens")


def pad_batch(toks: list[TokenizedExample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack token ids into a padded (B, T) matrix plus its validity mask."""
    t_max = max(len(t) for t in toks)
    ids = np.full((len(toks), t_max), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(toks), t_max), dtype=bool)
    for i, tok in enumerate(toks):
        ids[i, :len(tok)] = tok.token_ids
        mask[i, :len(tok)] = True
    return ids, mask


def encode_batch(
    ids: np.ndarray,
    mask: np.ndarray,
    params: EncoderParams,
    config: EncoderConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Run the encoder stack over a padded batch; returns (B, T, H)."""
    b, t = ids.shape
    if t > config.max_len:
        raise ValueError(f"batch length {t} exceeds max length {config.max_len}")
    x = ad.add(ad.embedding(params.tok_emb, ids), ad.embedding(params.pos_emb, np.arange(t)))
    x = ad.dropout(x, config.dropout, training, rng)
    for block in params.blocks:
        attn_in = ad.layer_norm(x, block.ln1_g, block.ln1_b) if block.ln1_g is not None else x
        attn, _ = multi_head_attention(
            attn_in, attn_in, attn_in, block.mha, mask=mask,
            dropout_rate=config.dropout, training=training, rng=rng,
        )
        x = ad.add(x, ad.dropout(attn, config.dropout, training, rng))
        ffn_in = ad.layer_norm(x, block.ln2_g, block.ln2_b) if block.ln2_g is not None else x
        y = ad.tanh_affine(ffn_in, block.ffn_w, block.ffn_b)
        x = ad.add(x, ad.dropout(y, config.dropout, training, rng))
    return x


def encode(
    tok: TokenizedExample,
    params: EncoderParams,
    config: EncoderConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[TokenEmbeddings, TokenizedExample]:
    """Encode one example; over-long inputs are windowed around the mentions
    (with a warning) or rejected when a labeled mention would be cut."""
    if len(tok) > config.max_len:
        window = fit_window(tok, config.max_len)  # raises TruncationError if mentions cannot fit
        warnings.warn(f"sample {tok.id}: truncated from {len(tok)} to {config.max_len} tokens")
        tok = window
    ids, mask = pad_batch([tok])
    x = encode_batch(ids, mask, params, config, training=training, rng=rng)
    return TokenEmbeddings(matrix=ad.index0(x, 0), source="toy"), tok


# ---------------------------------------------------------------------------
# Precomputed embeddings


def save_embeddings(path: str | Path, entries: dict[str, tuple[list[str], np.ndarray]]) -> None:
    """Write a keyed archive: sample id -> (token strings, T x H float64)."""
    manifest = {"format": 1, "samples": {}}
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for sid, (tokens, matrix) in entries.items():
            arr = np.asarray(matrix, dtype=np.float64)
            manifest["samples"][sid] = {"tokens": list(tokens), "shape": list(arr.shape)}
            zf.writestr(f"emb/{sid}", arr.astype("<f8").tobytes())
        zf.writestr("manifest.json", json.dumps(manifest, sort_keys=True))


class PrecomputedEmbeddings:
    """Read-side of the embedding archive; rows load frozen (no gradient)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        with zipfile.ZipFile(self.path, "r") as zf:
            self.manifest = json.loads(zf.read("manifest.json"))

    @property
    def ids(self) -> list[str]:
        return sorted(self.manifest["samples"])

    def get(self, sample_id: str) -> tuple[list[str], np.ndarray]:
        if sample_id not in self.manifest["samples"]:
            raise KeyError(f"no precomputed embeddings for sample {sample_id!r}")
        entry = self.manifest["samples"][sample_id]
        with zipfile.ZipFile(self.path, "r") as zf:
            raw = zf.read(f"emb/{sample_id}")
        matrix = np.frombuffer(raw, dtype="<f8").reshape(entry["shape"]).astype(np.float64)
        return list(entry["tokens"]), matrix


def load_precomputed(store: PrecomputedEmbeddings, tok: TokenizedExample) -> TokenEmbeddings:
    """Fetch frozen embeddings for a sample, checking token alignment."""
    tokens, matrix = store.get(tok.id)
    if len(tokens) != len(tok):
        raise AlignmentError(f"{tok.id}: archive has {len(tokens)} tokens, local tokenization has {len(tok)}")
    emb = TokenEmbeddings(matrix=Tensor(matrix), source="precomputed")
    emb.validate(tok)
    return emb
