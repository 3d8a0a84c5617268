"""Input validation helpers."""

import numbers

import numpy as np

from .exceptions import ConfigurationError


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ConfigurationError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ConfigurationError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise ConfigurationError(f"{name} must be >= 0, got {value!r}")
    return float(value)


def check_choice(value, name, choices):
    if value not in choices:
        raise ConfigurationError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value


def check_coefficients(coeffs, n_modes, name="coeffs"):
    """Return ``coeffs`` as a contiguous float64 vector of length ``n_modes``."""
    arr = np.asarray(coeffs, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != n_modes:
        raise ConfigurationError(
            f"{name} must be a vector of length {n_modes}, got shape {arr.shape}"
        )
    return np.ascontiguousarray(arr)


def check_random_state(seed):
    """Turn ``seed`` into a :class:`numpy.random.Generator`."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
