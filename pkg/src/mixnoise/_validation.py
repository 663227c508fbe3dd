"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


class ParameterDomainError(ValueError):
    """A distribution parameter is outside its admissible range."""


class DegenerateInputError(ValueError):
    """Input carries no usable information (e.g. all zeros)."""


class EstimationFailure(RuntimeError):
    """The estimator could not produce a finite answer."""


def as_samples(x, name="x", dtype=np.float64):
    """Flatten ``x`` into a finite 1-D float array.

    Frames shaped ``(2, L)`` or batches ``(B, 2, L)`` are accepted and
    flattened, since every estimator in the package treats the I and Q
    channels as a pooled set of real samples.
    """
    arr = np.asarray(x, dtype=dtype)
    if arr.size == 0:
        raise ValueError(f"{name} must be nonempty")
    arr = check_array(arr.reshape(1, -1), dtype=dtype, ensure_all_finite=True).ravel()
    return arr


def as_frame(y, name="y", dtype=np.float64):
    """Validate an I/Q frame of shape ``(2, L)`` or a batch ``(B, 2, L)``."""
    arr = np.asarray(y, dtype=dtype)
    if arr.ndim not in (2, 3) or arr.shape[-2] != 2:
        raise ValueError(f"{name} must have shape (2, L) or (B, 2, L), got {arr.shape}")
    if arr.shape[-1] == 0:
        raise ValueError(f"{name} must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_random_state(seed):
    """Return a ``numpy.random.Generator`` for ``seed``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def check_alpha(alpha, low=0.0, high=2.0, low_inclusive=False):
    a = float(alpha)
    ok = (a > low or (low_inclusive and a == low)) and a <= high
    if not ok or not np.isfinite(a):
        raise ParameterDomainError(f"alpha={alpha!r} outside ({low}, {high}]")
    return a


def check_nonneg(value, name):
    v = float(value)
    if not np.isfinite(v) or v < 0:
        raise ParameterDomainError(f"{name}={value!r} must be a finite nonnegative number")
    return v
