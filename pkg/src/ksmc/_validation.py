"""Input validation helpers shared across the package."""

import numbers

import numpy as np
from sklearn.utils import check_array


def check_generator(random_state=None):
    """Turn ``random_state`` into a ``numpy.random.Generator``.

    Accepts None, an int seed, a ``SeedSequence`` or an existing Generator
    (returned as is, so callers share the stream).
    """
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None or isinstance(random_state, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(random_state)
    if isinstance(random_state, np.random.RandomState):
        return np.random.default_rng(random_state.randint(0, 2**31 - 1))
    raise ValueError(f"{random_state!r} cannot be used to seed a numpy Generator")


def check_points(X, *, dim=None, name="X", min_samples=1, allow_inf=False):
    """Validate a point set, promoting a single d-vector to a 1 x d matrix.

    Returns ``(X2d, was_vector)``.
    """
    arr = np.asarray(X, dtype=float)
    was_vector = arr.ndim == 1
    if was_vector:
        arr = arr[None, :]
    arr = check_array(
        arr,
        ensure_min_samples=min_samples,
        ensure_all_finite=not allow_inf,
        input_name=name,
    )
    if allow_inf and np.isnan(arr).any():
        raise ValueError(f"{name} contains NaN")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"{name} has dimension {arr.shape[1]}, expected {dim}")
    return arr, was_vector


def check_weights(weights, n, *, name="sample_weight"):
    """Return nonnegative weights normalized to sum one.

    ``None`` means uniform. Raises ``ValueError("degenerate weights")`` when
    the total weight is zero.
    """
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape[0] != n:
        raise ValueError(f"{name} has length {w.shape[0]}, expected {n}")
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ValueError(f"{name} must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValueError("degenerate weights: total weight is zero")
    return w / total


def check_positive(value, name, *, strict=True):
    value = float(value)
    if not np.isfinite(value) or value < 0 or (strict and value == 0):
        bound = "> 0" if strict else ">= 0"
        raise ValueError(f"{name} must be {bound}, got {value}")
    return value
