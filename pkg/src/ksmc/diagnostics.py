"""Sample-quality metrics: MMD, weighted moments, covariance error, mode coverage."""

import itertools
from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.special import logsumexp

from ._validation import check_points, check_weights
from .kernels import gaussian_gram
from .smc.particles import ParticleSystem
from .smc.proposals import weighted_covariance

__all__ = [
    "MMDReference",
    "MMDResult",
    "covariance_rmse",
    "mmd",
    "mode_coverage",
    "pooled_moments",
    "polynomial_features",
    "standardize",
    "weighted_moments",
]


@dataclass(frozen=True)
class MMDResult:
    """``value`` is ``sqrt(max(0, mmd2))``; ``mmd2`` is the raw estimate."""

    value: float
    mmd2: float
    estimator: str
    kernel: str
    n: int
    m: int


def _multi_indices(dim, degree):
    """Exponent vectors ``alpha`` with ``|alpha| <= degree``."""
    out = []
    for k in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(dim), k):
            alpha = np.zeros(dim, dtype=int)
            for c in combo:
                alpha[c] += 1
            out.append(alpha)
    return np.array(out)


def polynomial_features(X, degree=3, offset=1.0):
    """Explicit features with ``phi(x) . phi(y) = (x . y + offset)^degree``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    alphas = _multi_indices(X.shape[1], degree)
    coef = np.array([
        factorial(degree) / (np.prod([factorial(a) for a in alpha]) * factorial(degree - alpha.sum()))
        * offset ** (degree - alpha.sum())
        for alpha in alphas
    ])
    out = np.ones((X.shape[0], len(alphas)))
    for j, alpha in enumerate(alphas):
        for k in np.flatnonzero(alpha):
            out[:, j] *= X[:, k] ** alpha[k]
    return out * np.sqrt(coef)


def standardize(X, reference):
    """Centre and scale ``X`` by the per-coordinate mean and std of ``reference``."""
    reference = np.atleast_2d(reference)
    scale = reference.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return (np.atleast_2d(X) - reference.mean(axis=0)) / scale


def mmd(X, Y, kernel="polynomial", degree=3, offset=1.0, lengthscale=1.0,
        estimator="biased", reference=None, x_weights=None):
    """Maximum mean discrepancy between samples ``X`` and ``Y``.

    Parameters
    ----------
    kernel : {"polynomial", "gaussian"}
        ``(x . y + offset)^degree`` or ``exp(-|x - y|^2 / (2 lengthscale^2))``.
    estimator : {"biased", "unbiased"}
        V-statistic (always >= 0) or U-statistic.
    reference : array, optional
        Standardize both samples by this sample's mean and std first.
    x_weights : array, optional
        Importance weights for ``X`` (biased estimator only).
    """
    X, _ = check_points(X, name="X", min_samples=2)
    Y, _ = check_points(Y, name="Y", min_samples=2)
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"X and Y differ in dimension: {X.shape[1]} vs {Y.shape[1]}")
    if estimator not in ("biased", "unbiased"):
        raise ValueError(f"unknown estimator {estimator!r}")
    if x_weights is not None and estimator == "unbiased":
        raise ValueError("weighted MMD is only available as the biased estimator")
    if reference is not None:
        X, Y = standardize(X, reference), standardize(Y, reference)
    n, m = len(X), len(Y)
    wx = check_weights(x_weights, n, name="x_weights")
    wy = np.full(m, 1.0 / m)

    if kernel == "polynomial":
        Fx = polynomial_features(X, degree, offset)
        Fy = polynomial_features(Y, degree, offset)
        mx, my = wx @ Fx, wy @ Fy
        if estimator == "biased":
            diff = mx - my
            mmd2 = float(diff @ diff)
        else:
            sx, sy = Fx.sum(axis=0), Fy.sum(axis=0)
            kxx = (sx @ sx - np.sum(Fx * Fx)) / (n * (n - 1))
            kyy = (sy @ sy - np.sum(Fy * Fy)) / (m * (m - 1))
            mmd2 = float(kxx + kyy - 2.0 * mx @ my)
        label = f"polynomial(degree={degree}, offset={offset})"
    elif kernel == "gaussian":
        Kxx = gaussian_gram(X, X, lengthscale)
        Kyy = gaussian_gram(Y, Y, lengthscale)
        Kxy = gaussian_gram(X, Y, lengthscale)
        if estimator == "biased":
            mmd2 = float(wx @ Kxx @ wx + wy @ Kyy @ wy - 2.0 * wx @ Kxy @ wy)
        else:
            kxx = (Kxx.sum() - np.trace(Kxx)) / (n * (n - 1))
            kyy = (Kyy.sum() - np.trace(Kyy)) / (m * (m - 1))
            mmd2 = float(kxx + kyy - 2.0 * Kxy.mean())
        label = f"gaussian(lengthscale={lengthscale})"
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    return MMDResult(float(np.sqrt(max(mmd2, 0.0))), mmd2, estimator, label, n, m)


class MMDReference:
    """Polynomial-kernel MMD against one fixed reference sample.

    The reference's standardization and feature moments are computed once,
    so scoring many particle systems against a large reference is cheap.
    Values equal :func:`mmd` with ``reference=Y``.
    """

    def __init__(self, Y, degree=3, offset=1.0, standardize=True):
        Y, _ = check_points(Y, name="Y", min_samples=2)
        self.degree, self.offset = degree, offset
        self.mean_ = Y.mean(axis=0) if standardize else np.zeros(Y.shape[1])
        scale = Y.std(axis=0) if standardize else np.ones(Y.shape[1])
        self.scale_ = np.where(scale > 0, scale, 1.0)
        F = polynomial_features(self._standardize(Y), degree, offset)
        self.n_ = len(Y)
        self.feature_mean_ = F.mean(axis=0)
        self.sum_sq_ = float(np.sum(F * F))

    def _standardize(self, X):
        return (X - self.mean_) / self.scale_

    def score(self, X, weights=None, estimator="biased"):
        X, _ = check_points(X, dim=len(self.mean_), name="X", min_samples=2)
        F = polynomial_features(self._standardize(X), self.degree, self.offset)
        n, m = len(X), self.n_
        my = self.feature_mean_
        if estimator == "biased":
            w = check_weights(weights, n, name="weights")
            diff = w @ F - my
            mmd2 = float(diff @ diff)
        elif estimator == "unbiased":
            if weights is not None:
                raise ValueError("weighted MMD is only available as the biased estimator")
            sx = F.sum(axis=0)
            sy = my * m
            kxx = (sx @ sx - np.sum(F * F)) / (n * (n - 1))
            kyy = (sy @ sy - self.sum_sq_) / (m * (m - 1))
            mmd2 = float(kxx + kyy - 2.0 * (sx / n) @ my)
        else:
            raise ValueError(f"unknown estimator {estimator!r}")
        label = f"polynomial(degree={self.degree}, offset={self.offset})"
        return MMDResult(float(np.sqrt(max(mmd2, 0.0))), mmd2, estimator, label, n, m)


def weighted_moments(ps):
    """Self-normalized weighted mean and covariance of a particle system."""
    if not isinstance(ps, ParticleSystem):
        raise TypeError("weighted_moments expects a ParticleSystem")
    w = ps.weights
    mean = w @ ps.X
    if 1.0 / np.sum(w * w) <= 1.0 + 1e-12:
        raise ValueError("covariance undefined: effective sample size is 1")
    return mean, weighted_covariance(ps.X, w)


def pooled_moments(history, burn_in=0):
    """Moments from all iterations of a PMC run pooled by unnormalized weight.

    ``history`` is a list of ``(X, log_unnormalized_weights)`` pairs as kept
    by :func:`ksmc.smc.run` with ``keep_history=True``.
    """
    kept = history[burn_in:]
    X = np.concatenate([h[0] for h in kept])
    logw = np.concatenate([h[1] for h in kept])
    return weighted_moments(ParticleSystem(X, logw - logsumexp(logw)))


def covariance_rmse(estimate, truth):
    """Root mean square error over all matrix entries (``||E - T||_F / d``)."""
    estimate, truth = np.atleast_2d(estimate), np.atleast_2d(truth)
    return float(np.sqrt(np.mean((estimate - truth) ** 2)))


def mode_coverage(ps, modes, radius):
    """Number of ``modes`` with a non-negligible particle within ``radius``.

    A particle counts when its normalized weight exceeds ``1e-6 / N``.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    modes = np.asarray(modes, dtype=float)
    if modes.size == 0:
        return 0
    modes = modes.reshape(len(modes), -1)
    X = ps.X if isinstance(ps, ParticleSystem) else np.atleast_2d(ps)
    w = ps.weights if isinstance(ps, ParticleSystem) else np.full(len(X), 1.0 / len(X))
    live = X[w > 1e-6 / len(X)]
    if live.size == 0:
        return 0
    covered = 0
    for mode in modes:
        if np.min(np.linalg.norm(live - mode, axis=1)) <= radius:
            covered += 1
    return covered
