"""Adaptive-moment optimizer with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


class MissingGradError(ValueError):
    """A trainable parameter reached the optimizer without a gradient."""


@dataclass
class AdamConfig:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-6
    weight_decay: float = 0.0
    # Bias correction on by default; turning it off reproduces the variant
    # that folds the raw moment estimates straight into the update.
    bias_correction: bool = True


@dataclass
class AdamState:
    """Per-parameter first/second moment buffers and the shared step count."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, Tensor], state: AdamState, config: AdamConfig) -> None:
    """One in-place update over all parameters.

    Weight decay is decoupled: lr * wd * param is subtracted directly rather
    than folded into the gradient, so decay strength does not pass through
    the adaptive scaling.
    """
    for name, p in params.items():
        if p.grad is None:
            raise MissingGradError(f"parameter {name!r} has no gradient")
        if p.grad.shape != p.data.shape:
            raise MissingGradError(f"parameter {name!r} gradient shape {p.grad.shape} != {p.data.shape}")
    state.t += 1
    t = state.t
    for name, p in params.items():
        g = p.grad
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * g * g
        if config.bias_correction:
            m_hat = m / (1.0 - config.beta1**t)
            v_hat = v / (1.0 - config.beta2**t)
        else:
            m_hat, v_hat = m, v
        # Decay references the pre-update value.
        decay = config.lr * config.weight_decay * p.data if config.weight_decay else 0.0
        p.data -= config.lr * m_hat / (np.sqrt(v_hat) + config.eps)
        p.data -= decay
