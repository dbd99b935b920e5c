"""A small reverse-mode autodiff tape over numpy arrays.

Only the operators the model needs are provided. Every op records its
parents and a closure that pushes the output gradient back to them; ``backward``
walks the tape in reverse topological order. Arrays keep the dtype they were
created with, so the same code runs in float32 for training and float64 for
finite-difference checks.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

DEBUG_FINITE = False


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name
        if DEBUG_FINITE and not np.all(np.isfinite(self.data)):
            raise NonFiniteError(f"non-finite values in tensor {name or '<op>'}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, seed: np.ndarray | None = None) -> None:
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            seed = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.asarray(seed, dtype=self.data.dtype))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if b.data.dtype != a.data.dtype and b.data.ndim == 0:
        b = Tensor(b.data.astype(a.data.dtype))

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bw)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(a.data @ b.data, (a, b), bw)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form: bounded for any input and much faster than exp-based logistic
    out = np.multiply(x, 0.5, dtype=x.dtype)
    np.tanh(out, out=out)
    out *= 0.5
    out += 0.5
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)

    def bw(g):
        a._accumulate(g * out * (1.0 - out))

    return _make(out, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bw(g):
        a._accumulate(g * (1.0 - out * out))

    return _make(out, (a,), bw)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bw(g):
        a._accumulate(g * mask)

    return _make(a.data * mask, (a,), bw)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def bw(g):
        a._accumulate(g * out)

    return _make(out, (a,), bw)


def square(a: Tensor) -> Tensor:
    def bw(g):
        a._accumulate(2.0 * g * a.data)

    return _make(a.data * a.data, (a,), bw)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; the gradient is zero where the clamp is active."""
    mask = (a.data >= lo) & (a.data <= hi)

    def bw(g):
        a._accumulate(g * mask)

    return _make(np.clip(a.data, lo, hi), (a,), bw)


def gather(a: Tensor, idx: np.ndarray) -> Tensor:
    """Rows ``a[idx]``; the backward pass scatter-adds in index order."""
    idx = np.asarray(idx, dtype=np.intp)

    def bw(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        a._accumulate(out)

    return _make(a.data[idx], (a,), bw)


def segment_sum(a: Tensor, segments: np.ndarray, n_segments: int) -> Tensor:
    """Sum rows of ``a`` into ``n_segments`` buckets (row order fixed)."""
    from rlvae import _kernels

    segments = np.asarray(segments, dtype=np.intp)

    def bw(g):
        a._accumulate(g[segments])

    return _make(_kernels.segment_sum(a.data, segments, n_segments), (a,), bw)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p._accumulate(g[tuple(sl)])

    return _make(np.concatenate([p.data for p in parts], axis=axis), parts, bw)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def bw(g):
        a._accumulate(g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), bw)


def total(a: Tensor) -> Tensor:
    """Sum of all elements as a 0-d tensor."""

    def bw(g):
        a._accumulate(np.broadcast_to(g, a.shape))

    return _make(np.asarray(a.data.sum(dtype=a.data.dtype)), (a,), bw)


def sum_rows(a: Tensor) -> Tensor:
    """Sum over the last axis."""

    def bw(g):
        a._accumulate(np.broadcast_to(g[..., None], a.shape))

    return _make(a.data.sum(axis=-1), (a,), bw)


def huber(a: Tensor, delta: float = 1.0) -> Tensor:
    """Elementwise Huber: 0.5x^2 inside |x| <= delta, linear outside."""
    x = a.data
    ax = np.abs(x)
    inside = ax <= delta
    out = np.where(inside, 0.5 * x * x, delta * (ax - 0.5 * delta)).astype(x.dtype)

    def bw(g):
        a._accumulate(g * np.where(inside, x, delta * np.sign(x)))

    return _make(out, (a,), bw)


def columns(a: Tensor, lo: int, hi: int) -> Tensor:
    """Column slice ``a[:, lo:hi]``."""

    def bw(g):
        full = np.zeros_like(a.data)
        full[:, lo:hi] = g
        a._accumulate(full)

    return _make(a.data[:, lo:hi], (a,), bw)


def gru(h: Tensor, x: Tensor, wx: Tensor, wh: Tensor, bx: Tensor, bh: Tensor) -> Tensor:
    """Fused GRU cell, gates packed [update | reset | candidate].

    h' = h + u * (c - h), c = tanh(x Wx_c + bx_c + r * (h Wh_c + bh_c)).
    One tape node instead of a dozen; the backward pass is written out by hand.
    """
    d = h.shape[-1]
    gx = x.data @ wx.data
    gx += bx.data
    gh = h.data @ wh.data
    gh += bh.data
    s = _sigmoid(gx[:, : 2 * d] + gh[:, : 2 * d])
    u, r = s[:, :d], s[:, d:]
    nh = gh[:, 2 * d :]
    c = np.tanh(gx[:, 2 * d :] + r * nh)
    out = h.data + u * (c - h.data)

    def bw(g):
        da_c = g * u * (1.0 - c * c)
        ds = np.empty_like(s)
        ds[:, :d] = g * (c - h.data)
        ds[:, d:] = da_c * nh
        ds *= s * (1.0 - s)
        dgx = np.concatenate([ds, da_c], axis=1)
        dgh = np.concatenate([ds, da_c * r], axis=1)
        if x.requires_grad:
            x._accumulate(dgx @ wx.data.T)
        if h.requires_grad:
            h._accumulate(g * (1.0 - u) + dgh @ wh.data.T)
        if wx.requires_grad:
            wx._accumulate(x.data.T @ dgx)
        if wh.requires_grad:
            wh._accumulate(h.data.T @ dgh)
        if bx.requires_grad:
            bx._accumulate(dgx.sum(axis=0))
        if bh.requires_grad:
            bh._accumulate(dgh.sum(axis=0))

    return _make(out, (h, x, wx, wh, bx, bh), bw)
