"""Fast invariant suite behind ``mixnoise selftest`` (a few seconds on one core)."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["CHECKS", "run_selftest"]


def _ecf_origin(rng):
    from ..ecfest import ecf

    return abs(ecf(rng.standard_normal(100), 0.0) - 1.0) == 0.0


def _inner_exact(rng):
    from ..ecfest import inner_solve

    t = np.linspace(0.1, 1.0, 10)
    fit = inner_solve(0.3 * t**2 + 0.7 * t**1.3, t, 1.3)
    return abs(fit.a - 0.3) < 1e-10 and abs(fit.b - 0.7) < 1e-10


def _search_exact(rng):
    from ..ecfest import search_alpha

    t = np.linspace(0.1, 1.0, 10)
    return abs(search_alpha(0.2 * t**2 + 0.5 * t**1.5, t).alpha - 1.5) <= 1e-3


def _cauchy_pdf(rng):
    from ..noisegen import MixedNoiseParams, mixed_pdf

    x = np.linspace(-10, 10, 2001)
    f = mixed_pdf(MixedNoiseParams(1.0, 1.0, 0.0), x)
    return float(np.max(np.abs(f - 1.0 / (math.pi * (1.0 + x * x))))) <= 1e-3


def _flom_gaussian(rng):
    from ..prep import flom_coeff

    # E|X|^p for N(0, 2): 2^p Gamma((p+1)/2) / sqrt(pi)
    p = 0.5
    return abs(flom_coeff(p, 2.0) - 2**p * math.gamma((p + 1) / 2) / math.sqrt(math.pi)) < 1e-12


def _clip_idempotent(rng):
    from ..prep import clip, clip_threshold

    y = rng.standard_cauchy((2, 256))
    y0 = clip_threshold(y)
    once = clip(y, y0)
    return np.array_equal(clip(once, y0), once) and np.all(np.hypot(*once) <= y0)


def _conv_grad(rng):
    from ..diffkit import conv1d, gradcheck

    x = rng.standard_normal((2, 3, 8))
    w = rng.standard_normal((4, 3, 3))
    b = rng.standard_normal(4)
    return gradcheck(lambda t: conv1d(*t), [x, w, b], seed=int(rng.integers(1 << 31))) <= 1e-4


def _frame_identity(rng):
    from ..sigmod import make_frame

    f = make_frame("QPSK", 1.5, 1.0, 10.0, L=64, seed=int(rng.integers(1 << 31)), es=5.0)
    g = make_frame("QPSK", 1.5, 1.0, 10.0, L=64, seed=f.meta.seed, es=5.0)
    return np.array_equal(f.y, f.s + f.n) and np.array_equal(f.y, g.y)


def _scale_equivariance(rng):
    from ..ecfest import estimate
    from ..noisegen import MixedNoiseParams, sample_mixed

    x = sample_mixed(MixedNoiseParams(1.5, 1.0, 1.0), 4096, seed=int(rng.integers(1 << 31)))
    r, q = estimate(x), estimate(10.0 * x)
    return abs(q.alpha_hat - r.alpha_hat) <= 1e-6 * r.alpha_hat and abs(
        q.gamma_s_hat - 10.0 * r.gamma_s_hat
    ) <= 1e-6 * 10.0 * r.gamma_s_hat


CHECKS = {
    "ecf(0) == 1": _ecf_origin,
    "inner_solve exact recovery": _inner_exact,
    "search_alpha noiseless recovery": _search_exact,
    "Cauchy pdf inversion": _cauchy_pdf,
    "FLOM coefficient at alpha=2": _flom_gaussian,
    "clip idempotent and bounded": _clip_idempotent,
    "conv1d gradient": _conv_grad,
    "frame y == s + n, seeded": _frame_identity,
    "estimate scale equivariance": _scale_equivariance,
}


def run_selftest(seed=0, out=print) -> list:
    """Run every check; print one line each and return the names that failed."""
    rng = np.random.default_rng(seed)
    failed = []
    for name, check in CHECKS.items():
        try:
            ok = bool(check(rng))
        except Exception as exc:  # report, do not abort the suite
            ok = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        out(f"{'PASS' if ok else 'FAIL'}  {name}")
        if not ok:
            failed.append(name)
    return failed
