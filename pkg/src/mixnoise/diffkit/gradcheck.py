"""Finite-difference gradient checking in float64."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def gradcheck(fn, inputs, n_points=10, h=1e-5, seed=0):
    """Largest relative error between backprop and central differences.

    ``fn`` maps a list of :class:`Tensor` (built from ``inputs``, cast to
    float64) to a Tensor.  Non-scalar outputs are reduced with a fixed random
    projection.  ``n_points`` coordinates are probed per input.
    """
    rng = np.random.default_rng(seed)
    base = [np.array(x, dtype=np.float64) for x in inputs]
    tensors = [Tensor(x.copy(), requires_grad=True) for x in base]
    out = fn(tensors)
    proj = rng.standard_normal(out.shape) if out.data.ndim else np.ones(())

    def scalar(arrays):
        res = fn([Tensor(a) for a in arrays])
        return float(np.sum(res.data * proj))

    out.backward(proj)
    worst = 0.0
    for i, x in enumerate(base):
        if x.size == 0:
            continue
        analytic = tensors[i].grad if tensors[i].grad is not None else np.zeros_like(x)
        idx = rng.choice(x.size, size=min(n_points, x.size), replace=False)
        for flat in idx:
            pos = np.unravel_index(flat, x.shape)
            plus = [a.copy() for a in base]
            minus = [a.copy() for a in base]
            plus[i][pos] += h
            minus[i][pos] -= h
            numeric = (scalar(plus) - scalar(minus)) / (2 * h)
            a = analytic[pos]
            denom = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
    return worst


def directional_check(loss_fn, params, h=1e-6, seed=0):
    """Relative gap between ``<grad, d>`` and a central difference along random ``d``.

    ``d`` is a unit vector over all parameters, so ``h`` is the true step
    length; an unnormalized direction over many weights would step far enough
    to cross activation kinks.

    ``loss_fn`` takes no arguments and reads the current ``params`` (float64
    Tensors) in place.
    """
    rng = np.random.default_rng(seed)
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    direction = [rng.standard_normal(p.shape) for p in params]
    norm = np.sqrt(sum(float(np.sum(d * d)) for d in direction))
    direction = [d / norm for d in direction]
    analytic = sum(float(np.sum(p.grad * d)) for p, d in zip(params, direction))
    saved = [p.data.copy() for p in params]
    for p, d, s in zip(params, direction, saved):
        p.data = s + h * d
    up = float(loss_fn().data)
    for p, d, s in zip(params, direction, saved):
        p.data = s - h * d
    down = float(loss_fn().data)
    for p, s in zip(params, saved):
        p.data = s
    numeric = (up - down) / (2 * h)
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)
