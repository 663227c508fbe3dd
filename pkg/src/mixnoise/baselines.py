"""Classical separators used as comparison points for the learned separator.

Each method maps a received ``(2, L)`` I/Q frame to a noise estimate of the
same shape, which is then handed to the ECF estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import EstimationFailure, as_frame
from .ecfest import EstimationResult, estimate
from .noisegen import MixedNoiseParams, ResolutionError, mixed_pdf
from .prep import clip, clip_threshold

__all__ = [
    "METHODS",
    "BaselineSpec",
    "run_baseline",
    "spectral_subtraction",
    "kalman_residual",
    "kalman_steady_state",
    "lmp_predict",
    "alphabet_for",
    "LogDensity",
    "mle_cancel",
    "MleTrace",
    "mle_alternate",
    "BaselineSeparator",
]

METHODS = ("none", "spectral_sub", "clip_only", "kalman", "lmp", "mle_alt")


@dataclass(frozen=True)
class BaselineSpec:
    method: str = "none"
    ss_beta: float = 1.0
    ss_subframes: int = 8
    kalman_q: float = 1e-2
    kalman_r: float | None = None
    lmp_order: int = 8
    lmp_p: float = 1.2
    lmp_step: float = 0.01
    mle_max_iter: int = 3
    scheme: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown baseline {self.method!r}; choose from {METHODS}")
        if self.ss_beta < 0:
            raise ValueError("ss_beta must be >= 0")
        if self.ss_subframes < 2:
            raise ValueError("ss_subframes must be >= 2")
        if self.kalman_q <= 0 or (self.kalman_r is not None and self.kalman_r <= 0):
            raise ValueError("Kalman variances must be positive")
        if self.lmp_order < 1 or not 1.0 <= self.lmp_p <= 2.0 or self.lmp_step <= 0:
            raise ValueError("LMP needs order >= 1, 1 <= p <= 2 and a positive step")
        if self.mle_max_iter < 1:
            raise ValueError("mle_max_iter must be >= 1")


# -- spectral subtraction ------------------------------------------------------


def spectral_subtraction(y, beta=1.0, n_sub=8):
    """Signal estimate by magnitude-floor subtraction with the original phase.

    The complex frame is cut into ``n_sub`` half-overlapping, flat-windowed,
    circularly wrapped sub-frames.  The noise floor is ``beta`` times the
    median magnitude over all sub-frame bins; each bin keeps
    ``max(|Y| - floor, 0)`` and its phase, and the sub-frames are overlap-added.
    """
    y = as_frame(y)
    z = y[0] + 1j * y[1]
    L = z.size
    hop = L // n_sub
    if hop < 1 or L % n_sub:
        raise ValueError(f"frame length {L} not divisible into {n_sub} sub-frames")
    M = 2 * hop
    idx = (np.arange(n_sub)[:, None] * hop + np.arange(M)[None, :]) % L
    spec = np.fft.fft(z[idx], axis=1)
    mag = np.abs(spec)
    floor = beta * np.median(mag)
    kept = np.maximum(mag - floor, 0.0) * np.exp(1j * np.angle(spec))
    pieces = np.fft.ifft(kept, axis=1)
    acc = np.zeros(L, dtype=complex)
    count = np.zeros(L)
    np.add.at(acc, idx.ravel(), pieces.ravel())
    np.add.at(count, idx.ravel(), 1.0)
    s_hat = acc / count
    return np.stack([s_hat.real, s_hat.imag])


# -- Kalman ------------------------------------------------------------------------


def kalman_steady_state(q, r):
    """Steady-state prior variance and gain of the scalar random-walk filter."""
    prior = (q + math.sqrt(q * q + 4.0 * q * r)) / 2.0
    return prior, prior / (prior + r)


def kalman_residual(x, q=1e-2, r=1.0):
    """Filter one real channel with a random-walk state model; return ``x - x_hat``."""
    x = np.asarray(x, dtype=np.float64)
    est = np.empty_like(x)
    state = x[0]
    var = r
    for k, obs in enumerate(x):
        var = var + q
        gain = var / (var + r)
        state = state + gain * (obs - state)
        var = (1.0 - gain) * var
        est[k] = state
    return x - est


# -- LMP ---------------------------------------------------------------------------


def lmp_predict(x, order=8, p=1.2, step=0.01, eps=1e-8):
    """Least-mean-p-norm one-step linear predictor on one real channel.

    The weights follow ``w += step * |e|**(p-1) * sign(e) * u / (eps + u @ u)``
    where ``u`` holds the previous ``order`` samples.  Returns the prediction
    error stream and the final weights.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.zeros(order)
    buf = np.zeros(order)
    err = np.empty_like(x)
    for k, obs in enumerate(x):
        e = obs - w @ buf
        err[k] = e
        w = w + step * np.abs(e) ** (p - 1.0) * np.sign(e) * buf / (eps + buf @ buf)
        buf = np.roll(buf, 1)
        buf[0] = obs
    return err, w


# -- MLE cancellation ----------------------------------------------------------------


def alphabet_for(scheme, oversample=4) -> np.ndarray:
    """Finite set of sample values a scheme can emit."""
    from .sigmod import _check_scheme, constellation

    scheme = _check_scheme(scheme)
    if scheme == "MSK":
        k = np.arange(4 * oversample)
        return np.exp(1j * k * np.pi / (2 * oversample))
    return constellation(scheme)


class LogDensity:
    """Tabulated log-density of one real noise channel with power-law/Gaussian tails."""

    def __init__(self, params: MixedNoiseParams, half_width=None, n_points=8001):
        spread = params.gamma_s + params.sigma
        if half_width is None:
            half_width = 40.0 * spread
        self.params = params
        while True:
            grid = np.linspace(-half_width, half_width, n_points)
            try:
                pdf = mixed_pdf(params, grid)
                break
            except ResolutionError:
                if n_points > 2**21:
                    raise
                n_points = 2 * n_points - 1
        if not np.any(pdf > 0):
            raise ValueError("degenerate density grid: all values vanish")
        tiny = np.finfo(float).tiny
        self.grid = grid
        self.logpdf = np.log(np.maximum(pdf, tiny))
        self.edge = grid[-1]
        self.edge_log = self.logpdf[-1]

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        ax = np.abs(x)
        inside = np.interp(ax, self.grid, self.logpdf)
        out = ax > self.edge
        if np.any(out):
            p = self.params
            if p.gamma_s > 0 and p.alpha < 2:
                tail = self.edge_log - (1.0 + p.alpha) * np.log(ax[out] / self.edge)
            else:
                var = p.sigma**2 + (2.0 * p.gamma_s**2 if p.alpha == 2 else 0.0)
                tail = self.edge_log - (ax[out] ** 2 - self.edge**2) / (2.0 * var)
            inside = inside.copy()
            inside[out] = tail
        return inside


def mle_cancel(y, params: MixedNoiseParams, alphabet, log_density=None) -> np.ndarray:
    """Per-sample maximum-likelihood symbol decision over ``alphabet``.

    I and Q noise are independent, so the joint log-likelihood of a candidate
    is the sum of the two channel log-densities.  Ties go to the candidate
    listed first.
    """
    y = as_frame(y)
    alphabet = np.asarray(alphabet, dtype=complex).ravel()
    if alphabet.size == 0:
        raise ValueError("empty alphabet")
    logg = log_density if log_density is not None else LogDensity(params)
    dI = y[0][None, :] - alphabet.real[:, None]
    dQ = y[1][None, :] - alphabet.imag[:, None]
    score = logg(dI) + logg(dQ)
    best = np.argmax(score, axis=0)
    chosen = alphabet[best]
    return np.stack([chosen.real, chosen.imag])


@dataclass
class MleTrace:
    estimates: list = field(default_factory=list)
    noise: np.ndarray | None = None
    truncated: bool = False

    @property
    def final(self) -> EstimationResult | None:
        return self.estimates[-1] if self.estimates else None


def _params_from(result: EstimationResult) -> MixedNoiseParams:
    if result.pure_gaussian or result.gamma_s_hat == 0:
        return MixedNoiseParams(2.0, 0.0, max(result.gamma_g_hat, 1e-12))
    alpha = min(max(result.alpha_hat, 0.5 + 1e-9), 2.0)
    return MixedNoiseParams(alpha, result.gamma_s_hat, result.gamma_g_hat)


def mle_alternate(y, alphabet, max_iter=3, **estimate_kw) -> MleTrace:
    """Alternate noise estimation and MLE signal cancellation.

    Iteration ``k`` estimates the noise parameters from the current residual
    (the raw frame on the first pass), decides the symbols with those
    parameters, and forms the next residual ``y - s_hat``.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    y = as_frame(y)
    trace = MleTrace(noise=y.copy())
    residual = y
    for _ in range(max_iter):
        try:
            result = estimate(residual, **estimate_kw)
            params = _params_from(result)
            s_hat = mle_cancel(y, params, alphabet)
        except (EstimationFailure, ValueError):
            trace.truncated = True
            break
        trace.estimates.append(result)
        residual = y - s_hat
        trace.noise = residual
    return trace


# -- dispatch ------------------------------------------------------------------------


def run_baseline(spec: BaselineSpec, frame) -> np.ndarray:
    """Noise estimate for one frame (a :class:`~mixnoise.sigmod.Frame` or a ``(2, L)`` array)."""
    y = as_frame(frame.y if hasattr(frame, "y") else frame)
    if y.ndim != 2:
        raise ValueError("run_baseline expects a single (2, L) frame")
    m = spec.method
    if m == "none":
        return y.copy()
    if m == "clip_only":
        return clip(y, clip_threshold(y))
    if m == "spectral_sub":
        return y - spectral_subtraction(y, spec.ss_beta, spec.ss_subframes)
    if m == "kalman":
        r = spec.kalman_r
        if r is None:
            r = float(np.var(clip(y, clip_threshold(y)), axis=1).mean())
            r = max(r, 1e-12)
        return np.stack([kalman_residual(ch, spec.kalman_q, r) for ch in y])
    if m == "lmp":
        return np.stack([lmp_predict(ch, spec.lmp_order, spec.lmp_p, spec.lmp_step)[0] for ch in y])
    scheme = spec.scheme or getattr(frame, "scheme", None)
    if scheme is None:
        raise ValueError("mle_alt needs the modulation scheme (spec.scheme or a Frame)")
    trace = mle_alternate(y, alphabet_for(scheme), spec.mle_max_iter)
    return trace.noise


class BaselineSeparator(TransformerMixin, BaseEstimator):
    """Transformer wrapper: ``transform(Y)`` returns noise estimates for ``(2, L)`` or ``(B, 2, L)`` input."""

    def __init__(self, method="none", scheme=None, ss_beta=1.0, kalman_q=1e-2, lmp_order=8, lmp_p=1.2, lmp_step=0.01, mle_max_iter=3):
        self.method = method
        self.scheme = scheme
        self.ss_beta = ss_beta
        self.kalman_q = kalman_q
        self.lmp_order = lmp_order
        self.lmp_p = lmp_p
        self.lmp_step = lmp_step
        self.mle_max_iter = mle_max_iter

    def _spec(self):
        return BaselineSpec(
            method=self.method, scheme=self.scheme, ss_beta=self.ss_beta, kalman_q=self.kalman_q,
            lmp_order=self.lmp_order, lmp_p=self.lmp_p, lmp_step=self.lmp_step,
            mle_max_iter=self.mle_max_iter,
        )

    def fit(self, X, y=None):
        as_frame(X)
        self.spec_ = self._spec()
        return self

    def transform(self, X):
        X = as_frame(X)
        spec = getattr(self, "spec_", None) or self._spec()
        if X.ndim == 2:
            return run_baseline(spec, X)
        return np.stack([run_baseline(spec, f) for f in X])
