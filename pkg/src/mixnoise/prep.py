"""Fractional lower-order moments, clipping and power normalization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammasgn, gammaln
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import DegenerateInputError, as_frame, as_samples

__all__ = [
    "GammaPoleError",
    "NormalizationRecord",
    "flom_coeff",
    "clip_threshold",
    "clip",
    "power_normalize",
    "Clipper",
]


class GammaPoleError(ValueError):
    """A Gamma-function argument lands on a pole."""


def _log_gamma_signed(z):
    if z <= 0 and float(z).is_integer():
        raise GammaPoleError(f"Gamma({z}) is a pole")
    return gammaln(z), gammasgn(z)


def flom_coeff(p: float, alpha: float) -> float:
    """Coefficient ``C(p, alpha)`` with ``E|X|**p = C(p, alpha) * gamma**p`` for SaS ``X``.

    Evaluated through log-Gamma with explicit signs, since ``Gamma(-p/alpha)``
    and ``Gamma(-p/2)`` are both negative for ``0 < p < alpha``.
    """
    p = float(p)
    alpha = float(alpha)
    if not (-1.0 < p < alpha):
        if p == alpha:
            raise GammaPoleError(f"C({p}, {alpha}): p == alpha is a pole")
        raise ValueError(f"moment order p={p} must satisfy -1 < p < alpha={alpha}")
    if p == 0.0:
        return 1.0
    la, sa = _log_gamma_signed((p + 1.0) / 2.0)
    lb, sb = _log_gamma_signed(-p / alpha)
    lc, sc = _log_gamma_signed(-p / 2.0)
    log_mag = (p + 1.0) * math.log(2.0) + la + lb - math.log(alpha) - 0.5 * math.log(math.pi) - lc
    return float(sa * sb * sc * math.exp(log_mag))


# Denominator of the empirical threshold; 0.51 stands in for the undefined 0.5.
_THRESHOLD_DENOM = flom_coeff(0.5, 2.0) + flom_coeff(0.5, 0.51)


def clip_threshold(y) -> float:
    """Empirical clipping threshold ``4*sqrt(2)*mean(sqrt|y|)/(C(.5,2)+C(.5,.51)) + 1``.

    ``|y|`` is the complex magnitude of each I/Q sample; the trailing ``+1``
    is the unit signal peak.
    """
    y = as_frame(y)
    mag = np.hypot(y[..., 0, :], y[..., 1, :])
    return float(4.0 * math.sqrt(2.0) * np.mean(np.sqrt(mag)) / _THRESHOLD_DENOM + 1.0)


def clip(y, y0: float) -> np.ndarray:
    """Limit each I/Q sample to magnitude ``y0``, keeping its phase."""
    if y0 <= 0:
        raise ValueError("y0 must be positive")
    arr = np.asarray(y)
    mag = np.hypot(arr[..., 0, :], arr[..., 1, :])
    over = mag > y0
    if not np.any(over):
        return arr.copy()
    scale = np.ones_like(mag)
    scale[over] = y0 / mag[over]
    out = arr * scale[..., None, :]
    # Rescaled magnitudes can overshoot y0 by an ulp; shave them so clip is idempotent.
    rows = np.moveaxis(out, -2, -1)
    for _ in range(8):
        fix = np.hypot(out[..., 0, :], out[..., 1, :]) > y0
        if not np.any(fix):
            break
        rows[fix] = rows[fix] * (1.0 - 4 * np.finfo(out.dtype).eps)
    return out


@dataclass(frozen=True)
class NormalizationRecord:
    scale: float
    method: str = "rms"


def power_normalize(x):
    """Divide ``x`` by its RMS; return the scaled copy and the factor used."""
    x = np.asarray(x, dtype=np.float64)
    flat = as_samples(x)
    c = float(np.sqrt(np.mean(flat**2)))
    if c == 0.0:
        raise DegenerateInputError("cannot power-normalize an all-zero input")
    return x / c, NormalizationRecord(c)


class Clipper(TransformerMixin, BaseEstimator):
    """Clip frames at a fixed ``threshold`` or, when ``None``, at each frame's own threshold."""

    def __init__(self, threshold=None):
        self.threshold = threshold

    def fit(self, X, y=None):
        as_frame(X)
        return self

    def transform(self, X):
        X = as_frame(X)
        if self.threshold is not None:
            return clip(X, self.threshold)
        if X.ndim == 2:
            return clip(X, clip_threshold(X))
        return np.stack([clip(f, clip_threshold(f)) for f in X])
