"""Scaled dot-product multi-head attention built on the autodiff primitives."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    add,
    ShapeError,
    Tensor,
    matmul,
    mul,
    parameter,
    reshape,
    softmax,
    swap_axes,
    dropout,
)


class HeadConfigError(ValueError):
    """Hidden size is not divisible by the head count."""


@dataclass
class MhaParams:
    """Projection weights for one multi-head attention layer.

    No biases: the projections follow the original scaled dot-product
    formulation. `heads` must divide the hidden size.
    """

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    heads: int

    @classmethod
    def init(cls, hidden: int, heads: int, rng: np.random.Generator, scale: float | None = 0.02, prefix: str = "mha") -> "MhaParams":
        """scale=None picks 1/sqrt(hidden): variance-preserving, needed where
        no residual path exists to carry signal past a small-init layer."""
        if hidden % heads != 0:
            raise HeadConfigError(f"hidden size {hidden} not divisible by {heads} heads")
        std = hidden**-0.5 if scale is None else scale
        mk = lambda tag: parameter(rng.normal(0.0, std, size=(hidden, hidden)), name=f"{prefix}.{tag}")
        return cls(wq=mk("wq"), wk=mk("wk"), wv=mk("wv"), wo=mk("wo"), heads=heads)

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.wq": self.wq, f"{prefix}.wk": self.wk, f"{prefix}.wv": self.wv, f"{prefix}.wo": self.wo}


def _split_heads(x: Tensor, heads: int) -> Tensor:
    # (..., T, H) -> (..., heads, T, d)
    *lead, t, h = x.shape
    return swap_axes(reshape(x, (*lead, t, heads, h // heads)), -3, -2)


def _merge_heads(x: Tensor) -> Tensor:
    # (..., heads, T, d) -> (..., T, heads*d)
    *lead, heads, t, d = x.shape
    return reshape(swap_axes(x, -3, -2), (*lead, t, heads * d))


def multi_head_attention(
    query: Tensor,
    key: Tensor,
    value: Tensor,
    params: MhaParams,
    mask: np.ndarray | None = None,
    dropout_rate: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, np.ndarray]:
    """Attend `query` over `key`/`value`; returns (output, attention weights).

    Shapes are (..., T, H) with matching leading dims for key and value;
    `mask` marks valid key positions and broadcasts over queries and heads.
    Scores are scaled by 1/sqrt(H / heads). The returned weights array has
    shape (..., heads, Tq, Tk) and each unmasked row sums to 1.
    """
    h = query.shape[-1]
    if h % params.heads != 0:
        raise HeadConfigError(f"hidden size {h} not divisible by {params.heads} heads")
    if key.shape != value.shape:
        raise ShapeError(f"key/value shapes differ: {key.shape} vs {value.shape}")
    tq, tk = query.shape[-2], key.shape[-2]
    d = h // params.heads

    # A single key wins all the attention regardless of the query, so the op
    # collapses to value + output projection. Only exact when no dropout can
    # zero the lone weight.
    if tk == 1 and mask is None and not (training and dropout_rate > 0.0):
        row = matmul(matmul(value, params.wv), params.wo)
        out = add(row, np.zeros((*query.shape[:-1], h)))  # every query row gets the same mix
        weights = np.ones((*key.shape[:-2], params.heads, tq, 1))
        return out, weights

    q = _split_heads(matmul(query, params.wq), params.heads)
    k = _split_heads(matmul(key, params.wk), params.heads)
    v = _split_heads(matmul(value, params.wv), params.heads)
    scores = mul(matmul(q, swap_axes(k, -1, -2)), 1.0 / math.sqrt(d))
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.ndim == 1:
            score_mask = m.reshape(1, 1, -1)
        else:
            # (..., Tk) -> (..., 1, 1, Tk): broadcast over heads and queries
            score_mask = m.reshape(*m.shape[:-1], 1, 1, m.shape[-1])
    else:
        score_mask = None
    attn = softmax(scores, axis=-1, mask=score_mask)
    weights = attn.data.copy()
    if training and dropout_rate > 0.0:
        attn = dropout(attn, dropout_rate, training=True, rng=rng)
    out = matmul(_merge_heads(matmul(attn, v)), params.wo)
    return out, weights
