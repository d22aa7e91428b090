"""Dense float64 tensors with reverse-mode automatic differentiation.

Everything downstream (encoder, pooling, classifiers) is composed from the
primitives here, so each op carries its own backward rule and the whole stack
stays checkable against central finite differences. Tensors are numpy-backed,
always float64, and small enough that exact grad checks beat raw speed.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class DegenerateMaskError(ValueError):
    """A softmax slice had no unmasked entries."""


class GradCheckError(ValueError):
    """grad_check was applied to a graph it cannot handle."""


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph capture inside the block (forward-only evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def rng_stream(seed: int, stream: int) -> np.random.Generator:
    # One master seed, fixed per-purpose stream offsets: reproducible runs
    # without coupling consumers to a shared generator's call order.
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),)))


class Tensor:
    """A float64 array plus an optional gradient and graph backpointer."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_scalar(self)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar output."""
        if self.data.size != 1:
            raise GradCheckError(f"backward() requires a scalar output, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward()

    # Operator sugar; everything routes through the module-level ops.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, grad={'set' if self.grad is not None else 'none'}{tag})"


def _raise_scalar(t: Tensor):
    raise GradCheckError(f"expected a scalar tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward: Callable[[], None]) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # Sum out axes that numpy broadcasting introduced or stretched.
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None
    out = _node(data, (a, b), lambda: None)

    def backward():
        if a.requires_grad:
            a._accumulate(_unbroadcast(out.grad, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(out.grad, b.shape))

    out._backward = backward if out._parents else None
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None
    out = _node(data, (a, b), lambda: None)

    def backward():
        if a.requires_grad:
            a._accumulate(_unbroadcast(out.grad * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(out.grad * a.data, b.shape))

    out._backward = backward if out._parents else None
    return out


def matmul(a, b) -> Tensor:
    """Matrix product with numpy @ batching over leading dims."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions disagree for shapes {a.shape} and {b.shape}")
    data = a.data @ b.data
    out = _node(data, (a, b), lambda: None)

    def backward():
        if a.requires_grad:
            a._accumulate(_unbroadcast(out.grad @ b.data.swapaxes(-1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(a.data.swapaxes(-1, -2) @ out.grad, b.shape))

    out._backward = backward if out._parents else None
    return out


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    out = _node(y, (x,), lambda: None)

    def backward():
        if x.requires_grad:
            x._accumulate(out.grad * (1.0 - y * y))

    out._backward = backward if out._parents else None
    return out


def tanh_affine(x, w, b) -> Tensor:
    """tanh(x @ w + b); the gradient of the tanh uses 1 - tanh^2."""
    return tanh(add(matmul(x, w), b))


def softmax(x, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Numerically stabilized softmax; masked-out positions are exactly 0.

    `mask` is a boolean array broadcastable to x's shape; every slice along
    `axis` must keep at least one unmasked entry.
    """
    x = as_tensor(x)
    if mask is None:
        m = np.ones(x.shape, dtype=bool)
    else:
        m = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    if not m.any(axis=axis).all():
        raise DegenerateMaskError(f"softmax: a slice along axis {axis} is fully masked")
    neg = np.where(m, x.data, -np.inf)
    mx = neg.max(axis=axis, keepdims=True)
    e = np.where(m, np.exp(np.where(m, x.data - mx, 0.0)), 0.0)
    z = e.sum(axis=axis, keepdims=True)
    y = e / z
    out = _node(y, (x,), lambda: None)

    def backward():
        if x.requires_grad:
            inner = (out.grad * y).sum(axis=axis, keepdims=True)
            x._accumulate(y * (out.grad - inner))

    out._backward = backward if out._parents else None
    return out


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; the identity when evaluating or when rate == 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= rate).astype(np.float64) / (1.0 - rate)
    out = _node(x.data * keep, (x,), lambda: None)

    def backward():
        if x.requires_grad:
            x._accumulate(out.grad * keep)

    out._backward = backward if out._parents else None
    return out


_CE_LO = 1e-15
_CE_HI = 1.0 - 1e-15


def cross_entropy(probs: Tensor, gold) -> Tensor:
    """Mean negative log-probability of the gold class.

    Expects probability rows (each summing to 1 within 1e-6); probabilities
    are clipped to [1e-15, 1 - 1e-15] before the log, and the clip kills the
    gradient where it binds.
    """
    probs = as_tensor(probs)
    gold = np.asarray(gold, dtype=np.int64).reshape(-1)
    if probs.ndim != 2 or probs.shape[0] != gold.shape[0]:
        raise ShapeError(f"cross_entropy: probs {probs.shape} vs {gold.shape[0]} gold labels")
    n_classes = probs.shape[1]
    if gold.min(initial=0) < 0 or gold.max(initial=0) >= n_classes:
        raise IndexError(f"cross_entropy: gold labels must lie in [0, {n_classes}), got {gold.tolist()}")
    sums = probs.data.sum(axis=1)
    if not np.allclose(sums, 1.0, atol=1e-6):
        raise ValueError(f"cross_entropy: probability rows must sum to 1 (max deviation {abs(sums - 1).max():.2e})")
    rows = np.arange(gold.shape[0])
    p = probs.data[rows, gold]
    clipped = np.clip(p, _CE_LO, _CE_HI)
    loss = -np.log(clipped).mean()
    out = _node(np.asarray(loss), (probs,), lambda: None)

    def backward():
        if probs.requires_grad:
            g = np.zeros_like(probs.data)
            inside = (p > _CE_LO) & (p < _CE_HI)
            g[rows[inside], gold[inside]] = -1.0 / (clipped[inside] * gold.shape[0])
            probs._accumulate(g * out.grad)

    out._backward = backward if out._parents else None
    return out


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    out = _node(x.data.reshape(shape), (x,), lambda: None)

    def backward():
        if x.requires_grad:
            x._accumulate(out.grad.reshape(x.shape))

    out._backward = backward if out._parents else None
    return out


def swap_axes(x: Tensor, a: int, b: int) -> Tensor:
    x = as_tensor(x)
    out = _node(x.data.swapaxes(a, b), (x,), lambda: None)

    def backward():
        if x.requires_grad:
            x._accumulate(out.grad.swapaxes(a, b))

    out._backward = backward if out._parents else None
    return out


def transpose2d(x: Tensor) -> Tensor:
    return swap_axes(x, -1, -2)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in ts], axis=axis)
    out = _node(data, ts, lambda: None)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward():
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * data.ndim
                idx[axis] = slice(int(lo), int(hi))
                t._accumulate(out.grad[tuple(idx)])

    out._backward = backward if out._parents else None
    return out


def stack_rows(tensors: Iterable[Tensor]) -> Tensor:
    """Stack same-shape vectors into a matrix (N, H)."""
    return concat([reshape(t, (1, -1)) for t in tensors], axis=0)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis; backward zero-pads."""
    x = as_tensor(x)
    if not 0 <= start and start + length <= x.shape[axis]:
        raise ShapeError(f"narrow: [{start}, {start + length}) out of bounds for axis {axis} of {x.shape}")
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = _node(x.data[idx], (x,), lambda: None)

    def backward():
        if x.requires_grad:
            g = np.zeros_like(x.data)
            g[idx] = out.grad
            x._accumulate(g)

    out._backward = backward if out._parents else None
    return out


def index0(x: Tensor, i: int) -> Tensor:
    """x[i] along the leading axis."""
    return reshape(narrow(x, 0, i, 1), x.shape[1:])


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup with scatter-add backward (rows may repeat)."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding: id out of range for table with {table.shape[0]} rows")
    out = _node(table.data[ids], (table,), lambda: None)

    def backward():
        if table.requires_grad:
            g = np.zeros_like(table.data)
            np.add.at(g, ids, out.grad)
            table._accumulate(g)

    out._backward = backward if out._parents else None
    return out


def sum_axis(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = _node(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), lambda: None)

    def backward():
        if x.requires_grad:
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(g, x.shape).copy())

    out._backward = backward if out._parents else None
    return out


def mean_all(x: Tensor) -> Tensor:
    x = as_tensor(x)
    return mul(sum_axis(x), 1.0 / x.data.size)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis; fused backward keeps graphs small."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = _node(gamma.data * xhat + beta.data, (x, gamma, beta), lambda: None)

    def backward():
        g = out.grad
        if beta.requires_grad:
            beta._accumulate(_unbroadcast(g, beta.shape))
        if gamma.requires_grad:
            gamma._accumulate(_unbroadcast(g * xhat, gamma.shape))
        if x.requires_grad:
            gx = g * gamma.data
            m1 = gx.mean(axis=-1, keepdims=True)
            m2 = (gx * xhat).mean(axis=-1, keepdims=True)
            x._accumulate((gx - m1 - xhat * m2) * inv)

    out._backward = backward if out._parents else None
    return out


def grad_check(
    fn: Callable[[], Tensor],
    params: dict[str, Tensor],
    step: float = 1e-3,
    max_per_param: int = 1000,
    floor: float = 1e-6,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare reverse-mode gradients against central finite differences.

    Returns the maximum relative error over all checked elements. Parameters
    with more than `max_per_param` elements are randomly subsampled. `fn`
    must rebuild the graph on every call and return a scalar.
    """
    rng = rng or np.random.default_rng(0)
    out = fn()
    if out.data.size != 1:
        raise GradCheckError(f"grad_check needs a scalar-valued graph, got shape {out.shape}")
    for t in params.values():
        t.zero_grad()
    out.backward()
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for k, t in params.items()}

    worst = 0.0
    for key, t in params.items():
        flat = t.data.reshape(-1)
        n = flat.size
        idx = np.arange(n) if n <= max_per_param else rng.choice(n, size=max_per_param, replace=False)
        a_flat = analytic[key].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(fn().data)
            flat[i] = orig - step
            f_minus = float(fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = a_flat[i]
            if abs(a) < 1e-7 and abs(numeric) < 1e-7:
                continue
            rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, rel)
    return worst
