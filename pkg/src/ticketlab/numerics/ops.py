"""Differentiable operations.

Each op computes its result eagerly with numpy and registers a backward
closure on the active tape (see tensor.py). The op set is exactly what
the encoder and its losses need; broadcasting support is limited to the
patterns used there (bias adds, positional adds, attention bias).

Shape annotations follow the conventions B=batch, T=sequence length,
d=hidden size, h=heads, V=vocab.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, _as_data, make_output


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    ad, bd = _as_data(a), _as_data(b)
    out = ad + bd

    def back(g):
        return (_unbroadcast(g, ad.shape), _unbroadcast(g, bd.shape))

    return make_output("add", (a, b), out, back)


def sub(a, b) -> Tensor:
    ad, bd = _as_data(a), _as_data(b)
    out = ad - bd

    def back(g):
        return (_unbroadcast(g, ad.shape), -_unbroadcast(g, bd.shape))

    return make_output("sub", (a, b), out, back)


def mul(a, b) -> Tensor:
    ad, bd = _as_data(a), _as_data(b)
    out = ad * bd

    def back(g):
        return (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape))

    return make_output("mul", (a, b), out, back)


def matmul(a, b) -> Tensor:
    """a @ b where a is (..., M, K) and b is (K, N) or (..., K, N).

    Batched operands must share leading dimensions exactly.
    """
    ad, bd = _as_data(a), _as_data(b)
    if ad.ndim < 2 or bd.ndim < 2:
        raise ShapeError(f"matmul requires 2d+ operands, got {ad.shape} @ {bd.shape}")
    if ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {ad.shape} @ {bd.shape}")
    if bd.ndim > 2 and ad.shape[:-2] != bd.shape[:-2]:
        raise ShapeError(f"matmul batch dimensions differ: {ad.shape} @ {bd.shape}")
    out = np.matmul(ad, bd)

    def back(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2))
        if bd.ndim == 2:
            k = ad.shape[-1]
            n = g.shape[-1]
            gb = np.matmul(ad.reshape(-1, k).T, g.reshape(-1, n))
        else:
            gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return (ga, gb)

    return make_output("matmul", (a, b), out, back)


def swapaxes(x, axis1: int, axis2: int) -> Tensor:
    xd = _as_data(x)
    out = np.swapaxes(xd, axis1, axis2)

    def back(g):
        return (np.swapaxes(g, axis1, axis2),)

    return make_output("swapaxes", (x,), out, back)


def transpose2d(x) -> Tensor:
    return swapaxes(x, -1, -2)


def reshape(x, shape: tuple) -> Tensor:
    xd = _as_data(x)
    out = xd.reshape(shape)

    def back(g):
        return (g.reshape(xd.shape),)

    return make_output("reshape", (x,), out, back)


def slice_rows(x, n: int) -> Tensor:
    """First ``n`` rows of a 2d tensor (positional embeddings up to T)."""
    xd = _as_data(x)
    if n > xd.shape[0]:
        raise ShapeError(f"cannot take {n} rows from shape {xd.shape}")
    out = xd[:n]

    def back(g):
        full = np.zeros_like(xd)
        full[:n] = g
        return (full,)

    return make_output("slice_rows", (x,), out, back)


def take_position(x, pos: int) -> Tensor:
    """x[:, pos, :] for a (B, T, d) tensor; used for first-token pooling."""
    xd = _as_data(x)
    if xd.ndim != 3 or not (0 <= pos < xd.shape[1]):
        raise ShapeError(f"take_position(pos={pos}) invalid for shape {xd.shape}")
    out = xd[:, pos, :]

    def back(g):
        full = np.zeros_like(xd)
        full[:, pos, :] = g
        return (full,)

    return make_output("take_position", (x,), out, back)


def embedding_lookup(table, ids) -> Tensor:
    """Rows of ``table`` (V, d) gathered by integer ``ids`` (any shape)."""
    td = _as_data(table)
    idx = np.asarray(ids)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError(f"token ids must be integers, got dtype {idx.dtype}")
    if idx.size and (idx.min() < 0 or idx.max() >= td.shape[0]):
        raise IndexError(
            f"token id out of range [0, {td.shape[0]}): min={idx.min()}, max={idx.max()}"
        )
    out = td[idx]

    def back(g):
        gt = np.zeros_like(td)
        np.add.at(gt, idx, g)
        return (gt, None)

    return make_output("embedding_lookup", (table, ids), out, back)


def softmax(x, axis: int = -1) -> Tensor:
    xd = _as_data(x)
    shifted = xd - xd.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return make_output("softmax", (x,), out, back)


def layer_norm(x, gain, bias, eps: float = 1e-12) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale-shift."""
    xd, gd, bd = _as_data(x), _as_data(gain), _as_data(bias)
    if gd.shape != xd.shape[-1:] or bd.shape != xd.shape[-1:]:
        raise ShapeError(
            f"layer_norm gain/bias shapes {gd.shape}/{bd.shape} do not match feature dim of {xd.shape}"
        )
    mu = xd.mean(axis=-1, keepdims=True)
    var = ((xd - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu) * inv
    out = xhat * gd + bd

    def back(g):
        lead = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=lead)
        dbias = g.sum(axis=lead)
        dxhat = g * gd
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        return (dx, dgain, dbias)

    return make_output("layer_norm", (x, gain, bias), out, back)


_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def gelu(x) -> Tensor:
    """Tanh-approximation GELU: 0.5 x (1 + tanh(c (x + a x^3)))."""
    xd = _as_data(x)
    u = _GELU_C * (xd + _GELU_A * xd ** 3)
    t = np.tanh(u)
    out = 0.5 * xd * (1.0 + t)

    def back(g):
        du = _GELU_C * (1.0 + 3.0 * _GELU_A * xd ** 2)
        dx = 0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t ** 2) * du
        return (g * dx,)

    return make_output("gelu", (x,), out, back)


def cross_entropy(logits, targets, weights=None) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under ``logits``.

    logits: (N, C); targets: (N,) ints. Optional ``weights`` (N,) reweights
    rows; the loss is sum(w_i * nll_i) / sum(w_i). Used with 0/1 weights to
    restrict an MLM loss to masked positions.
    """
    zd = _as_data(logits)
    t = np.asarray(targets)
    if zd.ndim != 2 or t.shape != (zd.shape[0],):
        raise ShapeError(f"cross_entropy expects (N, C) logits and (N,) targets, got {zd.shape} and {t.shape}")
    if t.size and (t.min() < 0 or t.max() >= zd.shape[1]):
        raise IndexError(f"target class out of range [0, {zd.shape[1]})")
    n = zd.shape[0]
    if weights is None:
        w = np.ones(n, dtype=zd.dtype)
    else:
        w = _as_data(weights)
        if w.shape != (n,):
            raise ShapeError(f"weights shape {w.shape} does not match {n} rows")
    wsum = w.sum()
    if wsum <= 0:
        raise ShapeError("cross_entropy requires a positive total weight")
    m = zd.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(zd - m).sum(axis=1))
    nll = lse - zd[np.arange(n), t]
    out = np.asarray((w * nll).sum() / wsum, dtype=zd.dtype)

    def back(g):
        p = np.exp(zd - m)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(n), t] -= 1.0
        dz = p * (w * (g / wsum))[:, None]
        return (dz, None, None)

    return make_output("cross_entropy", (logits, targets, weights), out, back)


def mse(pred, target) -> Tensor:
    """Mean squared error over all elements."""
    pd, td = _as_data(pred), _as_data(target)
    if pd.shape != td.shape:
        raise ShapeError(f"mse shapes differ: {pd.shape} vs {td.shape}")
    diff = pd - td
    out = np.asarray((diff ** 2).mean(), dtype=pd.dtype)

    def back(g):
        scale = 2.0 / pd.size
        return (g * scale * diff, -g * scale * diff)

    return make_output("mse", (pred, target), out, back)
