"""Gaussian Markov proposals ``q(. | x) = N(mean(x), cov(x))`` used by all samplers."""

import numpy as np
from scipy.special import logsumexp

from .._validation import check_generator

__all__ = [
    "GaussianProposal",
    "propose_asmc",
    "propose_gris",
    "propose_kasmc",
    "propose_kgris",
    "propose_random_walk",
    "safe_cholesky",
    "weighted_covariance",
]

LOG_2PI = np.log(2.0 * np.pi)


def safe_cholesky(A, retries=3):
    """Cholesky factor of a (batch of) symmetric matrices with jitter escalation.

    Starts at ``1e-10`` times the mean diagonal and multiplies the jitter by 10
    on each of ``retries`` failures before giving up.
    """
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        pass
    d = A.shape[-1]
    scale = np.mean(np.diagonal(A, axis1=-2, axis2=-1))
    jitter = 1e-10 * (scale if scale > 0 else 1.0)
    for _ in range(retries):
        try:
            return np.linalg.cholesky(A + jitter * np.eye(d))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise np.linalg.LinAlgError("proposal covariance is not positive definite after jitter escalation")


def weighted_covariance(X, weights):
    """Self-normalized weighted covariance with population normalization."""
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    mean = w @ X
    diff = X - mean
    cov = (diff * w[:, None]).T @ diff
    return 0.5 * (cov + cov.T)


class GaussianProposal:
    """Gaussian proposal with optional drift and state-dependent covariance.

    Parameters
    ----------
    cov : ndarray (d, d) or callable
        Shared covariance, or ``X -> (n, d, d)`` covariances per state.
    drift : callable, optional
        ``X -> (n, d)`` added to the current state to give the mean.
    """

    def __init__(self, cov, drift=None):
        self.drift = drift
        if callable(cov):
            self._cov_fn = cov
            self._shared = None
        else:
            cov = np.atleast_2d(np.asarray(cov, dtype=float))
            self._cov_fn = None
            self._shared = (cov, safe_cholesky(cov))

    @property
    def shared_covariance(self):
        return None if self._shared is None else self._shared[0]

    def mean(self, X):
        X = np.atleast_2d(X)
        return X if self.drift is None else X + self.drift(X)

    def covariance(self, X):
        X = np.atleast_2d(X)
        if self._shared is not None:
            return np.broadcast_to(self._shared[0], (X.shape[0],) + self._shared[0].shape)
        return self._cov_fn(X)

    def _chol(self, X):
        if self._shared is not None:
            return self._shared[1]
        return safe_cholesky(self._cov_fn(X))

    def sample(self, X, random_state=None):
        """One draw from ``q(. | x_i)`` for every row ``x_i``."""
        rng = check_generator(random_state)
        X = np.atleast_2d(X)
        L = self._chol(X)
        eps = rng.standard_normal(X.shape)
        if L.ndim == 2:
            step = eps @ L.T
        else:
            step = np.einsum("nij,nj->ni", L, eps)
        return self.mean(X) + step

    def log_density(self, Y, X):
        """``log q(Y_i | X_i)`` row by row."""
        Y, X = np.atleast_2d(Y), np.atleast_2d(X)
        return _gauss_logpdf(Y - self.mean(X), self._chol(X))

    def mixture_log_density(self, Y, Z, chunk_size=2048):
        """``log (1/n) sum_j q(Y_i | Z_j)`` for the equally weighted mixture over rows of ``Z``."""
        Y, Z = np.atleast_2d(Y), np.atleast_2d(Z)
        means = self.mean(Z)
        d = Y.shape[1]
        if self._shared is not None:
            L = self._shared[1]
            Yw = np.linalg.solve(L, Y.T).T
            Mw = np.linalg.solve(L, means.T).T
            half_logdet = np.sum(np.log(np.diag(L)))
            out = np.empty(Y.shape[0])
            for s in range(0, Y.shape[0], chunk_size):
                yc = Yw[s : s + chunk_size]
                maha = (
                    np.sum(yc * yc, axis=1)[:, None]
                    - 2.0 * yc @ Mw.T
                    + np.sum(Mw * Mw, axis=1)[None, :]
                )
                out[s : s + chunk_size] = logsumexp(-0.5 * np.maximum(maha, 0.0), axis=1)
            return out - half_logdet - 0.5 * d * LOG_2PI - np.log(Z.shape[0])
        L = safe_cholesky(self._cov_fn(Z))
        logs = np.empty((Y.shape[0], Z.shape[0]))
        for j in range(Z.shape[0]):
            logs[:, j] = _gauss_logpdf(Y - means[j], L[j])
        return logsumexp(logs, axis=1) - np.log(Z.shape[0])


def _gauss_logpdf(diff, L):
    d = diff.shape[1]
    if L.ndim == 2:
        z = np.linalg.solve(L, diff.T).T
        half_logdet = np.sum(np.log(np.diag(L)))
    else:
        z = np.linalg.solve(L, diff[:, :, None])[:, :, 0]
        half_logdet = np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1)
    return -0.5 * np.sum(z * z, axis=1) - half_logdet - 0.5 * d * LOG_2PI


def propose_random_walk(cov):
    return GaussianProposal(cov)


def propose_asmc(particle_cov, nu2, gamma2):
    """``N(x, nu2 Sigma + gamma2 I)`` with ``Sigma`` the weighted particle covariance."""
    particle_cov = np.atleast_2d(particle_cov)
    return GaussianProposal(nu2 * particle_cov + gamma2 * np.eye(particle_cov.shape[0]))


def propose_kasmc(emulator):
    """``N(x, gamma2 I + nu2 M C_w M^T)`` from a fitted covariance emulator.

    Not symmetric in general, so MH needs the Hastings correction.
    """
    return GaussianProposal(emulator.proposal_covariance)


def _clipped_drift(grad_fn, step, max_norm):
    def drift(X):
        D = step * grad_fn(X)
        if max_norm is not None and np.isfinite(max_norm):
            norms = np.linalg.norm(D, axis=1)
            shrink = np.minimum(1.0, max_norm / np.maximum(norms, 1e-300))
            D = D * shrink[:, None]
        return np.where(np.isfinite(D), D, 0.0)

    return drift


def propose_gris(grad_log_density, step, nu2, particle_cov, gamma2=0.0, max_drift=None):
    """``N(x + step * grad log pi(x), nu2 Sigma + gamma2 I)`` with an optional drift-norm cap."""
    particle_cov = np.atleast_2d(particle_cov)
    cov = nu2 * particle_cov + gamma2 * np.eye(particle_cov.shape[0])
    return GaussianProposal(cov, drift=_clipped_drift(grad_log_density, step, max_drift))


def propose_kgris(emulator, step, nu2, particle_cov, gamma2=0.0, max_drift=None):
    """GRIS proposal driven by the score-matching emulator's gradient."""
    return propose_gris(emulator.gradient, step, nu2, particle_cov, gamma2, max_drift)
