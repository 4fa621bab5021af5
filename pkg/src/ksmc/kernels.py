"""Gaussian kernel, median-heuristic bandwidth and random Fourier features.

The kernel convention throughout is

    k(x, y) = exp(-||x - y||^2 / (2 l^2))

with the lengthscale ``l`` usually set to the median pairwise distance of the
current particle cloud. Random Fourier features approximate ``k`` by
``phi(x) . phi(y)`` with ``phi(x)_i = sqrt(2/m) cos(W_i . x + u_i)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_generator, check_points, check_positive

__all__ = [
    "DegeneratePointSetError",
    "FourierFeatureMap",
    "RandomFourierFeatures",
    "embed",
    "embed_grad",
    "embed_hess_diag",
    "gaussian_gram",
    "kernel_eval",
    "kernel_grad_x",
    "median_heuristic",
    "sample_feature_map",
]


class DegeneratePointSetError(ValueError):
    """All points coincide, so no bandwidth can be read off the data."""


def _pair(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"x and y must be d-vectors of equal length, got {x.shape} and {y.shape}")
    return x, y


def kernel_eval(x, y, lengthscale=1.0):
    """Gaussian kernel between two d-vectors."""
    x, y = _pair(x, y)
    ell = check_positive(lengthscale, "lengthscale")
    diff = x - y
    return float(np.exp(-diff @ diff / (2.0 * ell**2)))


def kernel_grad_x(x, y, lengthscale=1.0):
    """Gradient of ``k(x, y)`` with respect to its first argument."""
    x, y = _pair(x, y)
    ell = check_positive(lengthscale, "lengthscale")
    diff = x - y
    return -diff / ell**2 * np.exp(-diff @ diff / (2.0 * ell**2))


def gaussian_gram(X, Y, lengthscale=1.0):
    """Kernel matrix ``K[i, j] = k(X[i], Y[j])`` for row-stacked points."""
    return np.exp(-cdist(X, Y, "sqeuclidean") / (2.0 * lengthscale**2))


def median_heuristic(points):
    """Median of all pairwise Euclidean distances among the rows of ``points``.

    For an even number of pairs this is the mean of the two central order
    statistics. Raises :class:`DegeneratePointSetError` when the median is
    zero (e.g. a collapsed, freshly resampled particle system).
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ValueError("median_heuristic needs at least two points")
    med = float(np.median(pdist(X)))
    if not med > 0:
        raise DegeneratePointSetError("degenerate point set: median pairwise distance is zero")
    return med


@dataclass(frozen=True, eq=False)
class FourierFeatureMap:
    """Random Fourier feature map for the Gaussian kernel.

    Attributes
    ----------
    frequencies : ndarray of shape (m, d)
        Rows drawn from the spectral density ``N(0, l^-2 I)``.
    phases : ndarray of shape (m,)
        Offsets drawn uniformly from ``[0, 2 pi)``.
    """

    frequencies: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        W = np.array(self.frequencies, dtype=float, ndmin=2)
        u = np.array(self.phases, dtype=float, ndmin=1)
        if W.shape[0] != u.shape[0]:
            raise ValueError("frequencies and phases disagree on the feature count")
        W.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "frequencies", W)
        object.__setattr__(self, "phases", u)

    @property
    def n_features(self):
        return self.frequencies.shape[0]

    @property
    def dim(self):
        return self.frequencies.shape[1]

    def _arg(self, x):
        X, was_vector = check_points(x, dim=self.dim, name="x")
        return X @ self.frequencies.T + self.phases, was_vector

    def _scale(self):
        return np.sqrt(2.0 / self.n_features)


def sample_feature_map(dim, n_features=300, lengthscale=1.0, random_state=None):
    """Draw a :class:`FourierFeatureMap` for ``k`` with the given lengthscale."""
    if int(dim) < 1 or int(n_features) < 1:
        raise ValueError("dim and n_features must be positive")
    ell = check_positive(lengthscale, "lengthscale")
    rng = check_generator(random_state)
    W = rng.standard_normal((int(n_features), int(dim))) / ell
    u = rng.uniform(0.0, 2.0 * np.pi, size=int(n_features))
    return FourierFeatureMap(W, u)


def embed(fmap, x):
    """Feature vector ``phi(x)``; a batch of rows gives an ``(n, m)`` array."""
    arg, was_vector = fmap._arg(x)
    phi = fmap._scale() * np.cos(arg)
    return phi[0] if was_vector else phi


def embed_grad(fmap, x):
    """Jacobian of ``phi`` at ``x``: column ``l`` is ``d phi / d x_l``.

    Shape ``(m, d)`` for a single point, ``(n, m, d)`` for a batch.
    """
    arg, was_vector = fmap._arg(x)
    out = -fmap._scale() * np.sin(arg)[:, :, None] * fmap.frequencies[None, :, :]
    return out[0] if was_vector else out


def embed_hess_diag(fmap, x):
    """Second derivatives ``d^2 phi / d x_l^2`` stacked as columns, like :func:`embed_grad`."""
    arg, was_vector = fmap._arg(x)
    out = -fmap._scale() * np.cos(arg)[:, :, None] * fmap.frequencies[None, :, :] ** 2
    return out[0] if was_vector else out


class RandomFourierFeatures(TransformerMixin, BaseEstimator):
    """Transformer embedding rows of ``X`` with random Fourier features.

    Parameters
    ----------
    n_components : int, default=300
        Number of features ``m``.
    lengthscale : float or "median", default="median"
        Kernel lengthscale; "median" applies the median heuristic to the data
        passed to :meth:`fit` (falling back to 1.0 on a degenerate set).
    random_state : int, Generator or None
    """

    def __init__(self, n_components=300, lengthscale="median", random_state=None):
        self.n_components = n_components
        self.lengthscale = lengthscale
        self.random_state = random_state

    def fit(self, X, y=None):
        X, _ = check_points(X)
        if self.lengthscale == "median":
            try:
                ell = median_heuristic(X) if X.shape[0] > 1 else 1.0
            except DegeneratePointSetError:
                ell = 1.0
        else:
            ell = check_positive(self.lengthscale, "lengthscale")
        self.lengthscale_ = ell
        self.feature_map_ = sample_feature_map(X.shape[1], self.n_components, ell, self.random_state)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "feature_map_")
        X, _ = check_points(X, dim=self.n_features_in_)
        return embed(self.feature_map_, X)
