"""Differentiable operators.

Feature maps are ``(batch, channels, length)``; 2-D ``(channels, length)``
inputs are accepted and keep their rank.  Every op preserves the dtype of its
inputs, so the same code runs in float32 for training and float64 for
gradient checks.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor, make_node

__all__ = [
    "conv1d",
    "downsample_max",
    "upsample_dup",
    "concat",
    "leaky_relu",
    "dense",
    "dropout",
    "reshape",
    "add",
    "scale",
    "mean_of",
    "mse",
    "l2_norm",
    "nmse_l2_loss",
    "deep_supervision_loss",
]


def _batched(x):
    return x if x.ndim == 3 else x[None]


def conv1d(x, kernels, bias) -> Tensor:
    """Zero-padded 'same' 1-D convolution (cross-correlation) with odd kernel length."""
    x, kernels, bias = as_tensor(x), as_tensor(kernels), as_tensor(bias)
    squeeze = x.data.ndim == 2
    xd = _batched(x.data)
    B, C, L = xd.shape
    Cout, Cin, K = kernels.shape
    if Cin != C:
        raise ValueError(f"conv1d: input has {C} channels, kernels expect {Cin}")
    if K % 2 == 0:
        raise ValueError("conv1d: kernel length must be odd")
    if bias.shape != (Cout,):
        raise ValueError(f"conv1d: bias shape {bias.shape} != ({Cout},)")
    pad = K // 2
    if K == 1:
        cols = xd
    else:
        xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad)))
        cols = np.stack([xp[:, :, k : k + L] for k in range(K)], axis=2).reshape(B, C * K, L)
    w2 = kernels.data.reshape(Cout, C * K)
    out = np.tensordot(w2, cols, axes=([1], [1]))  # (Cout, B, L)
    out = out.transpose(1, 0, 2) + bias.data[None, :, None]
    out = np.ascontiguousarray(out)
    if squeeze:
        out = out[0]

    def backward(g):
        g = _batched(g)
        gb = g.sum(axis=(0, 2))
        gw = np.tensordot(g, cols, axes=([0, 2], [0, 2])).reshape(Cout, C, K)
        gcols = np.tensordot(w2, g, axes=([0], [1]))  # (CK, B, L)
        gcols = gcols.reshape(C, K, B, L)
        if K == 1:
            gx = gcols[:, 0].transpose(1, 0, 2)
        else:
            gxp = np.zeros((C, B, L + 2 * pad), dtype=g.dtype)
            for k in range(K):
                gxp[:, :, k : k + L] += gcols[:, k]
            gx = gxp[:, :, pad : pad + L].transpose(1, 0, 2)
        gx = np.ascontiguousarray(gx)
        if squeeze:
            gx = gx[0]
        return gx, gw, gb

    return make_node(out, (x, kernels, bias), backward)


def downsample_max(x) -> Tensor:
    """Non-overlapping pairwise max along length; ties route gradient to the first element."""
    x = as_tensor(x)
    L = x.shape[-1]
    if L % 2:
        raise ValueError("downsample_max: length must be even")
    pairs = x.data.reshape(*x.shape[:-1], L // 2, 2)
    first = pairs[..., 0] >= pairs[..., 1]
    out = np.where(first, pairs[..., 0], pairs[..., 1])

    def backward(g):
        gx = np.empty(pairs.shape, dtype=g.dtype)
        gx[..., 0] = np.where(first, g, 0)
        gx[..., 1] = np.where(first, 0, g)
        return (gx.reshape(x.shape),)

    return make_node(out, (x,), backward)


def upsample_dup(x) -> Tensor:
    """Repeat every sample twice along length."""
    x = as_tensor(x)
    out = np.repeat(x.data, 2, axis=-1)

    def backward(g):
        return (g.reshape(*x.shape, 2).sum(axis=-1),)

    return make_node(out, (x,), backward)


def concat(*xs) -> Tensor:
    """Concatenate along the channel axis (second to last)."""
    if len(xs) == 1 and isinstance(xs[0], (list, tuple)):
        xs = tuple(xs[0])
    xs = tuple(as_tensor(x) for x in xs)
    lengths = {x.shape[-1] for x in xs}
    if len(lengths) != 1:
        raise ValueError(f"concat: length mismatch {sorted(lengths)}")
    out = np.concatenate([x.data for x in xs], axis=-2)
    bounds = np.cumsum([0] + [x.shape[-2] for x in xs])

    def backward(g):
        return tuple(g[..., bounds[i] : bounds[i + 1], :] for i in range(len(xs)))

    return make_node(out, xs, backward)


def leaky_relu(x, slope=0.01) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    out = np.where(pos, x.data, x.data * slope)

    def backward(g):
        return (np.where(pos, g, g * slope),)

    return make_node(out, (x,), backward)


def dense(x, W, b) -> Tensor:
    """Affine map ``x @ W.T + b`` on vectors ``(n,)`` or batches ``(B, n)``."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if x.shape[-1] != W.shape[1] or b.shape != (W.shape[0],):
        raise ValueError(f"dense: shapes x{x.shape}, W{W.shape}, b{b.shape} do not fit")
    out = x.data @ W.data.T + b.data

    def backward(g):
        gx = g @ W.data
        if g.ndim == 1:
            gW = np.outer(g, x.data)
            gb = g
        else:
            gW = g.T @ x.data
            gb = g.sum(axis=0)
        return gx, gW, gb

    return make_node(out, (x, W, b), backward)


def dropout(x, rate=0.3, training=True, rng=None) -> Tensor:
    """Inverted dropout; identity in eval mode or when ``rate == 0``."""
    x = as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if not training or rate == 0.0:
        return x
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    out = x.data * mask

    def backward(g):
        return (g * mask,)

    return make_node(out, (x,), backward)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(shape)

    def backward(g):
        return (g.reshape(x.shape),)

    return make_node(out, (x,), backward)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return make_node(a.data + b.data, (a, b), lambda g: (g, g))


def scale(x, c) -> Tensor:
    x = as_tensor(x)
    c = x.dtype.type(c)
    return make_node(x.data * c, (x,), lambda g: (g * c,))


def mean_of(xs) -> Tensor:
    """Elementwise mean of equally shaped tensors."""
    xs = tuple(as_tensor(x) for x in xs)
    if not xs:
        raise ValueError("mean_of: nothing to average")
    k = len(xs)
    # Shifted mean: exact when all inputs are equal.
    base = xs[0].data
    spread = np.zeros_like(base)
    for x in xs[1:]:
        spread = spread + (x.data - base)
    out = base + spread / base.dtype.type(k)
    inv = base.dtype.type(1.0 / k)
    return make_node(out, xs, lambda g: tuple(g * inv for _ in range(k)))


def mse(pred, target) -> Tensor:
    """Mean squared error; ``target`` is treated as a constant."""
    pred = as_tensor(pred)
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.dtype)
    if pred.shape != t.shape:
        raise ValueError(f"loss: shape mismatch {pred.shape} vs {t.shape}")
    diff = pred.data - t
    n = diff.size
    out = np.asarray(np.mean(diff * diff), dtype=pred.dtype)

    def backward(g):
        return (g * (2.0 / n) * diff,)

    return make_node(out, (pred,), backward)


def l2_norm(params) -> Tensor:
    """Euclidean norm of all parameters stacked together (not squared)."""
    params = tuple(as_tensor(p) for p in params)
    if not params:
        return Tensor(np.asarray(0.0))
    sq = sum(float(np.sum(p.data.astype(np.float64) ** 2)) for p in params)
    norm = np.sqrt(sq)
    dtype = params[0].dtype
    out = np.asarray(norm, dtype=dtype)

    def backward(g):
        if norm == 0.0:
            return tuple(np.zeros_like(p.data) for p in params)
        return tuple(g * (p.data / dtype.type(norm)) for p in params)

    return make_node(out, params, backward)


def nmse_l2_loss(pred, target, params=(), mu=0.0) -> Tensor:
    """``mean |pred - target|**2 + mu * ||params||_2``."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    loss = mse(pred, target)
    if mu > 0 and params:
        loss = add(loss, scale(l2_norm(params), mu))
    return loss


def deep_supervision_loss(preds, target, params=(), mu=0.0, reduce="mean") -> Tensor:
    """Aggregate head losses (``reduce`` in {'mean', 'sum'}) plus one shared regularizer."""
    if reduce not in ("mean", "sum"):
        raise ValueError("reduce must be 'mean' or 'sum'")
    terms = [mse(p, target) for p in preds]
    total = mean_of(terms)
    if reduce == "sum":
        total = scale(total, len(terms))
    if mu > 0 and params:
        total = add(total, scale(l2_norm(params), mu))
    return total
