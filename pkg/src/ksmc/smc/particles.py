"""Weighted particle systems: normalization, reweighting, ESS and resampling."""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .._validation import check_generator
from ..emulators import systematic_indices
from ..exceptions import ParticleSystemDiedError

__all__ = ["ParticleSystem", "ess", "log_mean_exp", "normalize", "resample", "reweight"]


@dataclass
class ParticleSystem:
    """Particles ``X`` with log-weights ``logw``.

    ``cache`` holds per-particle arrays that travel with the particles through
    resampling (the raw initial and target log-densities for bridge targets),
    so a noisy target is never re-evaluated at an existing particle.
    """

    X: np.ndarray
    logw: np.ndarray
    cache: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.logw = np.asarray(self.logw, dtype=float).ravel()
        if self.X.shape[0] != self.logw.shape[0]:
            raise ValueError("X and logw disagree on the number of particles")
        if np.isnan(self.logw).any():
            raise ValueError("log-weights contain NaN")

    @classmethod
    def uniform(cls, X, **cache):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return cls(X, np.full(X.shape[0], -np.log(X.shape[0])), dict(cache))

    @property
    def size(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]

    @property
    def weights(self):
        return np.exp(self.logw - logsumexp(self.logw))

    def take(self, idx):
        return ParticleSystem(self.X[idx], self.logw[idx], {k: v[idx] for k, v in self.cache.items()})


def normalize(ps, iteration=None):
    """Shift log-weights so they log-sum-exp to zero."""
    total = logsumexp(ps.logw)
    if not np.isfinite(total):
        raise ParticleSystemDiedError(iteration)
    return replace(ps, logw=ps.logw - total)


def log_mean_exp(values):
    values = np.asarray(values, dtype=float)
    return float(logsumexp(values) - np.log(values.size))


def reweight(ps, log_prev, log_next, iteration=None):
    """Move the system from ``pi_prev`` to ``pi_next`` by importance weighting.

    Returns ``(new_system, log_increment)`` where the increment is
    ``log sum_i w_i pi_next(x_i) / pi_prev(x_i)`` with the incoming weights
    normalized, i.e. the estimate of ``log Z_next - log Z_prev``.
    """
    ps = normalize(ps, iteration)
    log_prev = np.asarray(log_prev, dtype=float)
    log_next = np.asarray(log_next, dtype=float)
    with np.errstate(invalid="ignore"):
        ratio = log_next - log_prev
    # particles already at zero weight stay there whatever the ratio
    ratio = np.where(np.isneginf(ps.logw) | np.isnan(ratio), -np.inf, ratio)
    unnorm = ps.logw + ratio
    increment = logsumexp(unnorm)
    if not np.isfinite(increment):
        raise ParticleSystemDiedError(iteration)
    return replace(ps, logw=unnorm - increment), float(increment)


def ess(ps):
    """Effective sample size ``1 / sum w_i^2`` of the normalized weights."""
    w = ps.weights
    return float(1.0 / np.sum(w * w))


def resample(ps, scheme="systematic", random_state=None, iteration=None):
    """Equally weighted system of the same size drawn in proportion to the weights."""
    ps = normalize(ps, iteration)
    rng = check_generator(random_state)
    w = ps.weights
    n = ps.size
    if scheme == "systematic":
        idx = systematic_indices(w, n, rng)
    elif scheme == "multinomial":
        idx = rng.choice(n, size=n, p=w)
    else:
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    out = ps.take(idx)
    out.logw = np.full(n, -np.log(n))
    return out
