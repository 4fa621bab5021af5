"""Reference samples to score sampler output against.

``exact_reference`` draws directly from targets that can be sampled
(banana, Gaussians). ``multistart_reference`` builds a long-run MCMC
reference for targets that cannot: many random-walk chains from spread-out
starts, with the mass of each cluster of chains re-estimated by importance
sampling so that chains stuck in one mode cannot distort the mode weights.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from ._validation import check_generator
from .mcmc import random_walk_metropolis
from .targets import GaussianMixtureTarget, SensorNetworkTarget

__all__ = [
    "ReferenceSample",
    "exact_reference",
    "find_modes",
    "multistart_reference",
    "reflect_sensors",
    "reflection_labels",
]


@dataclass
class ReferenceSample:
    samples: np.ndarray
    modes: np.ndarray = None
    cluster_mass: dict = field(default_factory=dict)
    is_ess: float = np.nan
    log_evidence: float = np.nan

    @property
    def n(self):
        return len(self.samples)

    @property
    def n_modes(self):
        return 0 if self.modes is None else len(self.modes)


def exact_reference(target, n, random_state=None):
    if not hasattr(target, "sample"):
        raise TypeError(f"{type(target).__name__} cannot be sampled exactly")
    return ReferenceSample(np.asarray(target.sample(int(n), random_state)))


def _base_line(target):
    if not isinstance(target, SensorNetworkTarget) or len(target.base_locations) < 2:
        raise ValueError("reflection labels need a sensor target with at least two bases")
    b0, b1 = target.base_locations[:2]
    u = (b1 - b0) / np.linalg.norm(b1 - b0)
    return b0, np.array([-u[1], u[0]])


def reflection_labels(target, X):
    """Integer code of which side of the first two bases' line each unknown lies on.

    Mirroring an unknown sensor across that line leaves both of its base
    distances unchanged, so these side patterns index the candidate modes.
    """
    b0, normal = _base_line(target)
    X = np.atleast_2d(X)
    P = X.reshape(len(X), target.n_unknown, 2) - b0
    side = (P @ normal) > 0
    return side @ (1 << np.arange(target.n_unknown))


def reflect_sensors(target, X, pattern):
    """Mirror unknown sensors so that ``reflection_labels`` equals ``pattern``."""
    b0, normal = _base_line(target)
    X = np.atleast_2d(X)
    P = X.reshape(len(X), target.n_unknown, 2).copy()
    for i in range(target.n_unknown):
        r = (P[:, i] - b0) @ normal
        flip = (r > 0) != bool((int(pattern) >> i) & 1)
        P[flip, i] -= 2.0 * r[flip, None] * normal
    return P.reshape(len(X), -1)


def find_modes(target, starts, merge_tol=1e-2, tol=1e-8, max_iter=20000):
    """Distinct local maxima of ``target`` reached by Nelder-Mead from ``starts``.

    Returns ``(modes, log_density_at_modes)`` sorted by decreasing density.
    """
    found = []
    for x0 in np.atleast_2d(starts):
        res = minimize(lambda x: -float(target.log_density(x)), x0, method="Nelder-Mead",
                       options=dict(xatol=tol, fatol=tol, maxiter=max_iter, maxfev=max_iter))
        if not np.isfinite(res.fun):
            continue
        if all(np.linalg.norm(res.x - m) > merge_tol for m, _ in found):
            found.append((res.x, -res.fun))
    found.sort(key=lambda p: -p[1])
    return np.array([m for m, _ in found]), np.array([v for _, v in found])


def multistart_reference(target, n_ref, n_chains=100, n_iterations=50000, labels=None,
                         n_importance=200000, min_cluster=50, thin=10, random_state=None):
    """Long-run multi-start MCMC reference sample with re-estimated cluster masses.

    Parameters
    ----------
    labels : callable or "reflection", optional
        Maps points to integer cluster labels. Chains are started evenly over
        the labels (sensor targets: mirrored prior draws) and the pooled
        samples of each cluster are reweighted to the cluster's importance
        sampling mass. ``None`` pools all chains with equal weight.
    n_importance : int
        Draws from a Gaussian mixture fitted to the clusters (covariances
        doubled) used to estimate cluster masses and the evidence.

    Notes
    -----
    Half of each chain is discarded as burn-in. ``modes`` holds the distinct
    local maxima found from the best sample of every cluster.
    """
    rng = check_generator(random_state)
    reflection = labels == "reflection"
    if reflection:
        def labels(X):
            return reflection_labels(target, X)
    prior = getattr(target, "prior", None)
    if prior is None:
        raise ValueError("multistart_reference needs a target with a samplable prior")
    X0 = prior.sample(n_chains, rng)
    if reflection:
        n_patterns = 1 << target.n_unknown
        X0 = np.concatenate([reflect_sensors(target, X0[c : c + 1], c % n_patterns)
                             for c in range(n_chains)])
    chains = random_walk_metropolis(target, X0, n_iterations, thin=thin, random_state=rng)
    pool = chains.pooled()
    logp = chains.log_density.reshape(-1)

    if labels is None:
        idx = rng.choice(len(pool), size=int(n_ref), replace=len(pool) < n_ref)
        modes, _ = find_modes(target, pool[[np.argmax(logp)]])
        return ReferenceSample(pool[idx], modes)

    lab = np.asarray(labels(pool))
    clusters = [k for k in np.unique(lab) if np.sum(lab == k) >= min_cluster]
    means = [pool[lab == k].mean(axis=0) for k in clusters]
    covs = [2.0 * np.cov(pool[lab == k].T) + 1e-10 * np.eye(pool.shape[1]) for k in clusters]
    proposal = GaussianMixtureTarget(np.full(len(clusters), 1.0 / len(clusters)), means, covs)
    Xq = proposal.sample(int(n_importance), rng)
    logw = target.log_density(Xq) - proposal.log_density(Xq)
    log_z = float(logsumexp(logw) - np.log(len(logw)))
    w = np.exp(logw - logsumexp(logw))
    lq = np.asarray(labels(Xq))
    mass = {int(k): float(w[lq == k].sum()) for k in clusters}

    counts = {int(k): int(np.sum(lab == k)) for k in clusters}
    per_sample = np.array([mass[int(k)] / counts[int(k)] if int(k) in mass else 0.0 for k in lab])
    per_sample /= per_sample.sum()
    idx = rng.choice(len(pool), size=int(n_ref), replace=True, p=per_sample)
    starts = [pool[np.argmax(np.where(lab == k, logp, -np.inf))] for k in clusters]
    modes, _ = find_modes(target, starts)
    return ReferenceSample(pool[idx], modes, mass, float(1.0 / np.sum(w * w)), log_z)
