"""Unnormalized log-density targets.

Every target takes row-stacked points ``(n, d)`` (or a single d-vector) and
returns log-densities that are finite or ``-inf``, never NaN. Targets whose
normalizing constant is known expose it as ``log_normalizer`` so evidence
estimates can be checked exactly.
"""

import itertools
import json
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from ._validation import check_generator
from .exceptions import ConfigurationError

__all__ = [
    "BananaTarget",
    "GaussianMixtureTarget",
    "GaussianTarget",
    "NoisyTarget",
    "SensorNetworkTarget",
    "TargetDensity",
    "banana_log_density",
    "gaussian_log_density",
    "gaussian_mixture_log_density",
    "generate_sensor_dataset",
    "noisy_log_density",
    "sensor_log_density",
]

LOG_2PI = np.log(2.0 * np.pi)


def _batch(X, dim):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {X.shape}")
    return X, single


def _unbatch(values, single):
    values = np.where(np.isnan(values), -np.inf, values)
    return float(values[0]) if single else values


class TargetDensity:
    """Base class for log-density targets.

    Subclasses implement ``_log_density`` on an ``(n, d)`` batch and may
    implement ``_grad`` for the exact gradient.
    """

    is_noisy = False
    log_normalizer = None

    def __init__(self, dim):
        self.dim = int(dim)

    def log_density(self, X, rng=None):
        X, single = _batch(X, self.dim)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            values = self._log_density(X)
        return _unbatch(values, single)

    @property
    def has_gradient(self):
        return type(self)._grad is not TargetDensity._grad

    def grad_log_density(self, X):
        X, single = _batch(X, self.dim)
        G = self._grad(X)
        return G[0] if single else G

    def _log_density(self, X):
        raise NotImplementedError

    def _grad(self, X):
        raise NotImplementedError(f"{type(self).__name__} has no exact gradient")


def _check_spd(cov, dim):
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (dim, dim):
        raise ConfigurationError(f"covariance must be {dim}x{dim}, got {cov.shape}")
    if not np.allclose(cov, cov.T):
        raise ConfigurationError("covariance is not symmetric")
    try:
        return cov, np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ConfigurationError("covariance is not positive definite") from None


class GaussianTarget(TargetDensity):
    """``exp(log_scale) * N(x; mean, cov)``, so ``log Z = log_scale``."""

    def __init__(self, mean, cov=None, log_scale=0.0):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        super().__init__(mean.shape[0])
        if cov is None:
            cov = np.eye(self.dim)
        elif np.isscalar(cov) or np.ndim(cov) == 0:
            cov = float(cov) * np.eye(self.dim)
        self.mean = mean
        self.cov, self._chol = _check_spd(cov, self.dim)
        self._prec = np.linalg.inv(self.cov)
        self.log_scale = float(log_scale)
        self.log_normalizer = self.log_scale
        self._logdet = 2.0 * np.sum(np.log(np.diag(self._chol)))

    def _log_density(self, X):
        diff = X - self.mean
        maha = np.einsum("ni,ij,nj->n", diff, self._prec, diff)
        return self.log_scale - 0.5 * (self.dim * LOG_2PI + self._logdet + maha)

    def _grad(self, X):
        return -(X - self.mean) @ self._prec

    def sample(self, n, random_state=None):
        rng = check_generator(random_state)
        return self.mean + rng.standard_normal((int(n), self.dim)) @ self._chol.T


def gaussian_log_density(mean, cov, x):
    return GaussianTarget(mean, cov).log_density(x)


class GaussianMixtureTarget(TargetDensity):
    """Finite Gaussian mixture, optionally scaled by ``exp(log_scale)``."""

    def __init__(self, weights, means, covs, log_scale=0.0):
        weights = np.asarray(weights, dtype=float)
        means = np.atleast_2d(np.asarray(means, dtype=float))
        if weights.ndim != 1 or len(weights) != len(means) or np.any(weights < 0) or weights.sum() <= 0:
            raise ConfigurationError("mixture weights must be a nonnegative vector matching the means")
        super().__init__(means.shape[1])
        if np.ndim(covs) == 2:
            covs = [covs] * len(means)
        self.components = [GaussianTarget(m, c) for m, c in zip(means, covs)]
        self.weights = weights / weights.sum()
        self.log_scale = float(log_scale)
        self.log_normalizer = self.log_scale

    def _component_logs(self, X):
        return np.stack([np.log(w) + c._log_density(X) for w, c in zip(self.weights, self.components)])

    def _log_density(self, X):
        return self.log_scale + logsumexp(self._component_logs(X), axis=0)

    def _grad(self, X):
        logs = self._component_logs(X)
        resp = np.exp(logs - logsumexp(logs, axis=0))
        return sum(r[:, None] * c._grad(X) for r, c in zip(resp, self.components))

    def sample(self, n, random_state=None):
        rng = check_generator(random_state)
        labels = rng.choice(len(self.weights), size=int(n), p=self.weights)
        out = np.empty((int(n), self.dim))
        for k, comp in enumerate(self.components):
            idx = np.flatnonzero(labels == k)
            out[idx] = comp.sample(len(idx), rng)
        return out


def gaussian_mixture_log_density(weights, means, covs, x):
    return GaussianMixtureTarget(weights, means, covs).log_density(x)


class BananaTarget(TargetDensity):
    """Twisted Gaussian ``N(y1; 0, v) N(y2; b (y1^2 - v), 1) prod_j N(yj; 0, 1)``.

    Normalized (``log Z = 0``). Exact draws come from shearing a Gaussian,
    which has unit Jacobian.
    """

    log_normalizer = 0.0

    def __init__(self, dim=8, b=0.1, v=100.0):
        if int(dim) < 2:
            raise ConfigurationError("banana target needs dim >= 2")
        if not v > 0:
            raise ConfigurationError("banana variance v must be positive")
        super().__init__(dim)
        self.b = float(b)
        self.v = float(v)

    def _log_density(self, X):
        y1, y2 = X[:, 0], X[:, 1]
        r = y2 - self.b * (y1**2 - self.v)
        rest = np.sum(X[:, 2:] ** 2, axis=1)
        return (
            -0.5 * (LOG_2PI + np.log(self.v)) - 0.5 * y1**2 / self.v
            - 0.5 * LOG_2PI - 0.5 * r**2
            - 0.5 * (self.dim - 2) * LOG_2PI - 0.5 * rest
        )

    def _grad(self, X):
        y1, y2 = X[:, 0], X[:, 1]
        r = y2 - self.b * (y1**2 - self.v)
        G = -X.copy()
        G[:, 0] = -y1 / self.v + 2.0 * self.b * y1 * r
        G[:, 1] = -r
        return G

    def twist(self, Z):
        """Map standard-normal rows to banana draws."""
        Y = np.array(Z, dtype=float, copy=True)
        Y[:, 0] *= np.sqrt(self.v)
        Y[:, 1] += self.b * (Y[:, 0] ** 2 - self.v)
        return Y

    def sample(self, n, random_state=None):
        rng = check_generator(random_state)
        return self.twist(rng.standard_normal((int(n), self.dim)))

    def mean(self):
        return np.zeros(self.dim)

    def covariance(self):
        """Exact covariance: ``diag(v, 2 b^2 v^2 + 1, 1, ..., 1)``."""
        c = np.ones(self.dim)
        c[0] = self.v
        c[1] = 2.0 * self.b**2 * self.v**2 + 1.0
        return np.diag(c)


def banana_log_density(target, y):
    return target.log_density(y)


class SensorNetworkTarget(TargetDensity):
    """Posterior over the 2-D locations of ``S`` sensors from noisy, partly missing ranges.

    A pair at distance ``D`` is observed with probability
    ``exp(-D^2 / (2 R^2))`` and, if observed, reports ``Y ~ N(D, sigma2)``.
    Sensor indices ``0..S-1`` are the unknowns, ``S..S+B-1`` the bases with
    known locations. Base-base pairs carry no information and are masked out.

    Parameters
    ----------
    n_unknown : int
    base_locations : array of shape (B, 2)
    observed : bool array of shape (S+B, S+B)
        Symmetric indicator ``Z``.
    distances : array of shape (S+B, S+B)
        Symmetric ``Y``; ignored where ``observed`` is False.
    R, sigma2 : float
    prior_mean : float or array of shape (2S,), default=0.5
    prior_cov : float or array, default=1.0
    """

    def __init__(self, n_unknown, base_locations, observed, distances, R=0.3, sigma2=0.02,
                 prior_mean=0.5, prior_cov=1.0):
        S = int(n_unknown)
        if S < 1:
            raise ConfigurationError("need at least one unknown sensor")
        super().__init__(2 * S)
        bases = np.asarray(base_locations, dtype=float).reshape(-1, 2)
        n_total = S + len(bases)
        Z = np.asarray(observed, dtype=bool)
        Y = np.asarray(distances, dtype=float)
        if Z.shape != (n_total, n_total) or Y.shape != (n_total, n_total):
            raise ConfigurationError(f"observation matrices must be {n_total}x{n_total}")
        if not (np.array_equal(Z, Z.T) and np.allclose(Y, Y.T)):
            raise ConfigurationError("observation matrices must be symmetric")
        if not R > 0 or not sigma2 > 0:
            raise ConfigurationError("R and sigma2 must be positive")
        self.n_unknown = S
        self.base_locations = bases
        self.observed = Z
        self.distances = np.where(Z, Y, 0.0)
        self.R = float(R)
        self.sigma2 = float(sigma2)
        mean = np.broadcast_to(np.asarray(prior_mean, dtype=float), (2 * S,)).copy()
        cov = np.asarray(prior_cov, dtype=float)
        self.prior = GaussianTarget(mean, cov * np.eye(2 * S) if cov.ndim == 0 else cov)
        # unknown-unknown and unknown-base pairs only
        self.pairs = np.array(
            [(i, j) for i, j in itertools.combinations(range(n_total), 2) if i < S],
            dtype=int,
        ).reshape(-1, 2)

    @property
    def n_sensors(self):
        return self.n_unknown + len(self.base_locations)

    def locations(self, X):
        """All sensor locations, shape ``(n, S+B, 2)``."""
        P = X.reshape(X.shape[0], self.n_unknown, 2)
        B = np.broadcast_to(self.base_locations, (X.shape[0],) + self.base_locations.shape)
        return np.concatenate([P, B], axis=1)

    def _log_density(self, X):
        L = self.locations(X)
        i, j = self.pairs[:, 0], self.pairs[:, 1]
        D = np.sqrt(np.sum((L[:, i] - L[:, j]) ** 2, axis=-1))
        q = D**2 / (2.0 * self.R**2)
        z = self.observed[i, j]
        y = self.distances[i, j]
        hit = -q - 0.5 * (np.log(2.0 * np.pi * self.sigma2) + (y - D) ** 2 / self.sigma2)
        miss = np.log(-np.expm1(-q))
        return self.prior._log_density(X) + np.sum(np.where(z, hit, miss), axis=1)

    def to_dict(self):
        return {
            "n_unknown": self.n_unknown,
            "base_locations": self.base_locations.tolist(),
            "observed": self.observed.astype(int).tolist(),
            "distances": self.distances.tolist(),
            "R": self.R,
            "sigma2": self.sigma2,
            "prior_mean": self.prior.mean.tolist(),
            "prior_cov": self.prior.cov.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["n_unknown"],
            data["base_locations"],
            np.asarray(data["observed"], dtype=bool),
            data["distances"],
            R=data["R"],
            sigma2=data["sigma2"],
            prior_mean=data.get("prior_mean", 0.5),
            prior_cov=data.get("prior_cov", 1.0),
        )

    def save(self, path, true_locations=None, seed=None):
        """Write the dataset as JSON; ``load`` reads it back."""
        data = self.to_dict()
        if true_locations is not None:
            data["true_locations"] = np.asarray(true_locations).reshape(-1, 2).tolist()
        data["seed"] = seed
        Path(path).write_text(json.dumps(data, indent=1))

    @classmethod
    def load(cls, path):
        """Returns ``(target, true_locations or None)``."""
        data = json.loads(Path(path).read_text())
        truth = data.get("true_locations")
        return cls.from_dict(data), None if truth is None else np.asarray(truth)


def sensor_log_density(target, x):
    return target.log_density(x)


def generate_sensor_dataset(n_unknown, n_bases, R=0.3, sigma2=0.02, random_state=None,
                            locations="prior", prior_mean=0.5, prior_cov=1.0):
    """Simulate a sensor network and its range observations.

    ``locations`` chooses how the true positions (unknown sensors and bases)
    are drawn: ``"prior"`` from the prior ``N(prior_mean, prior_cov I)``,
    ``"unit_square"`` uniformly on ``[0, 1]^2``. Returns
    ``(target, true_locations)`` with ``true_locations`` of shape ``(S, 2)``.
    """
    rng = check_generator(random_state)
    S, B = int(n_unknown), int(n_bases)
    if S < 1 or B < 0:
        raise ConfigurationError("need n_unknown >= 1 and n_bases >= 0")
    n_total = S + B
    if locations == "prior":
        L = prior_mean + np.sqrt(prior_cov) * rng.standard_normal((n_total, 2))
    elif locations == "unit_square":
        L = rng.uniform(size=(n_total, 2))
    else:
        raise ConfigurationError(f"unknown location sampler {locations!r}")
    D = np.sqrt(np.sum((L[:, None] - L[None, :]) ** 2, axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.exp(-(D**2) / (2.0 * R**2))
    Z = np.zeros((n_total, n_total), dtype=bool)
    Y = np.zeros((n_total, n_total))
    for i, j in itertools.combinations(range(n_total), 2):
        if i >= S:
            continue
        if rng.uniform() < p[i, j]:
            Z[i, j] = Z[j, i] = True
            Y[i, j] = Y[j, i] = D[i, j] + np.sqrt(sigma2) * rng.standard_normal()
    # sigma2 = 0 is allowed for simulation; the likelihood needs a positive variance
    target = SensorNetworkTarget(S, L[S:], Z, Y, R=R, sigma2=max(sigma2, 1e-300),
                                 prior_mean=prior_mean, prior_cov=prior_cov)
    return target, L[:S].copy()


class NoisyTarget(TargetDensity):
    """Pseudo-marginal wrapper: replaces the exact likelihood by an unbiased estimate.

    Built-in noise is multiplicative log-normal, ``log eps ~ N(-tau2/2, tau2)``
    so ``E[eps] = 1``. A custom ``estimator(X, rng) -> log-density estimates``
    may be given instead.
    """

    is_noisy = True

    def __init__(self, inner, tau2=0.25, estimator=None):
        super().__init__(inner.dim)
        if tau2 < 0:
            raise ConfigurationError("tau2 must be nonnegative")
        self.inner = inner
        self.tau2 = float(tau2)
        self.estimator = estimator
        self.log_normalizer = inner.log_normalizer

    def log_density(self, X, rng=None):
        X, single = _batch(X, self.dim)
        rng = check_generator(rng)
        if self.estimator is not None:
            values = np.asarray(self.estimator(X, rng), dtype=float)
        else:
            values = np.atleast_1d(self.inner.log_density(X))
            if self.tau2 > 0:
                noise = rng.normal(-0.5 * self.tau2, np.sqrt(self.tau2), size=len(values))
                values = values + noise
        return _unbatch(values, single)


def noisy_log_density(wrapper, x, rng):
    return wrapper.log_density(x, rng)
