"""Markov chain baselines run as independent chains in lockstep.

* :func:`random_walk_metropolis` is an adaptive random-walk sampler used to
  build long-run reference samples from many starting points.
* :func:`kernel_adaptive_metropolis` is the single-chain counterpart of
  KASMC: the same kernel covariance proposal, fitted to the chain's own
  history, with a vanishing adaptation schedule and no tempering.

Chains never interact; vectorizing over them only amortizes interpreter
overhead.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_generator
from .kernels import DegeneratePointSetError, median_heuristic
from .smc.moves import adapt_scale
from .smc.proposals import safe_cholesky

__all__ = ["ChainResult", "kernel_adaptive_metropolis", "random_walk_metropolis"]


@dataclass
class ChainResult:
    """Post burn-in states, shape ``(n_chains, n_kept, d)``."""

    samples: np.ndarray
    log_density: np.ndarray
    acceptance: np.ndarray
    n_evaluations: int

    def pooled(self):
        return self.samples.reshape(-1, self.samples.shape[-1])


def _burn_in(n_iterations, burn_in):
    if isinstance(burn_in, float):
        return int(round(burn_in * n_iterations))
    return int(burn_in)


def random_walk_metropolis(target, X0, n_iterations, burn_in=0.5, thin=1, adapt_every=500,
                           random_state=None):
    """Gaussian random-walk Metropolis chains with covariance learnt during burn-in.

    Every ``adapt_every`` burn-in steps each chain's proposal covariance is
    reset to ``2.38^2/d`` times its own recent sample covariance, and a
    global log-scale follows a Robbins-Monro recursion towards acceptance
    0.234. The kernel is frozen after burn-in, so kept states are exact.
    """
    rng = check_generator(random_state)
    X = np.array(X0, dtype=float, ndmin=2)
    C, d = X.shape
    n_burn = _burn_in(n_iterations, burn_in)
    logp = target.log_density(X)
    chol = np.broadcast_to(np.eye(d) * 0.1, (C, d, d)).copy()
    log_scale = np.zeros(C)
    window = []
    kept, kept_logp = [], []
    accepted = np.zeros(C)
    for t in range(n_iterations):
        step = np.einsum("cij,cj->ci", chol, rng.standard_normal((C, d)))
        Y = X + np.exp(log_scale)[:, None] * step
        logq = target.log_density(Y)
        with np.errstate(invalid="ignore"):
            log_alpha = np.minimum(0.0, logq - logp)
        log_alpha = np.where(np.isnan(log_alpha), -np.inf, log_alpha)
        accept = np.log(rng.uniform(size=C)) < log_alpha
        X = np.where(accept[:, None], Y, X)
        logp = np.where(accept, logq, logp)
        if t < n_burn:
            log_scale += (np.exp(log_alpha) - 0.234) / np.sqrt(t + 1.0)
            window.append(X.copy())
            if len(window) == adapt_every:
                W = np.stack(window, axis=1)
                cov = np.einsum("cni,cnj->cij", W - W.mean(1, keepdims=True),
                                W - W.mean(1, keepdims=True)) / adapt_every
                cov = 2.38**2 / d * cov + 1e-8 * np.eye(d)
                chol = np.stack([safe_cholesky(c) for c in cov])
                log_scale[:] = 0.0
                window = []
        else:
            accepted += accept
            if (t - n_burn) % thin == 0:
                kept.append(X.copy())
                kept_logp.append(logp.copy())
    n_kept_steps = max(n_iterations - n_burn, 1)
    return ChainResult(np.stack(kept, axis=1), np.stack(kept_logp, axis=1),
                       accepted / n_kept_steps, C * (n_iterations + 1))


def _kamh_covariance(x, anchors, ell, nu2, gamma2):
    """Uniform-weight ``gamma2 I + nu2 M C M^T`` per chain with ``M = l^2 grad k``.

    ``x``: (C, d), ``anchors``: (C, n, d), ``ell``/``nu2``: (C,).
    """
    diff = x[:, None, :] - anchors
    k = np.exp(-np.einsum("cnd,cnd->cn", diff, diff) / (2.0 * ell[:, None] ** 2))
    G = diff * k[:, :, None]
    n = anchors.shape[1]
    mean = G.mean(axis=1)
    cov = np.matmul(G.transpose(0, 2, 1), G) / n - mean[:, :, None] * mean[:, None, :]
    d = x.shape[1]
    return gamma2 * np.eye(d) + nu2[:, None, None] * cov


def _gauss_logpdf(Y, X, cov):
    L = np.linalg.cholesky(cov)
    z = np.linalg.solve(L, (Y - X)[..., None])[..., 0]
    half_logdet = np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1)
    return -0.5 * np.sum(z * z, axis=1) - half_logdet, L


def kernel_adaptive_metropolis(target, X0, n_iterations, nu2=None, gamma2=0.01,
                               learning_rate="inv_sqrt", target_acceptance=0.234,
                               max_anchors=500, first_refit=100, burn_in=0.5, thin=1,
                               random_state=None):
    """Kernel adaptive Metropolis-Hastings, one independent chain per row of ``X0``.

    The emulator is refitted on a uniform subsample of each chain's history
    at iterations ``first_refit * 2^k``, so adaptation vanishes. Until the
    first refit the proposal is ``N(x, gamma2 I)``. ``nu2`` follows the same
    Robbins-Monro recursion as the SMC samplers with ``1/sqrt(t)`` steps.
    """
    rng = check_generator(random_state)
    X = np.array(X0, dtype=float, ndmin=2)
    C, d = X.shape
    n_burn = _burn_in(n_iterations, burn_in)
    nu2 = np.full(C, 2.38**2 / d if nu2 is None else float(nu2))
    logp = target.log_density(X)
    history = np.empty((C, n_iterations + 1, d))
    history[:, 0] = X
    anchors, ell = None, np.ones(C)
    next_refit = int(first_refit)
    kept, kept_logp = [], []
    accepted = np.zeros(C)
    for t in range(1, n_iterations + 1):
        if t == next_refit:
            size = min(t, int(max_anchors))
            idx = np.stack([rng.choice(t, size=size, replace=False) for _ in range(C)])
            anchors = np.take_along_axis(history[:, :t], idx[:, :, None], axis=1)
            for c in range(C):
                try:
                    ell[c] = median_heuristic(anchors[c])
                except DegeneratePointSetError:
                    pass
            next_refit *= 2
        if anchors is None:
            Y = X + np.sqrt(gamma2) * rng.standard_normal((C, d))
            log_ratio_q = 0.0
        else:
            cov_x = _kamh_covariance(X, anchors, ell, nu2, gamma2)
            Lx = np.linalg.cholesky(cov_x)
            Y = X + np.einsum("cij,cj->ci", Lx, rng.standard_normal((C, d)))
            cov_y = _kamh_covariance(Y, anchors, ell, nu2, gamma2)
            back, _ = _gauss_logpdf(X, Y, cov_y)
            fwd, _ = _gauss_logpdf(Y, X, cov_x)
            log_ratio_q = back - fwd
        logq = target.log_density(Y)
        with np.errstate(invalid="ignore"):
            log_alpha = np.minimum(0.0, logq - logp + log_ratio_q)
        log_alpha = np.where(np.isnan(log_alpha), -np.inf, log_alpha)
        accept = np.log(rng.uniform(size=C)) < log_alpha
        X = np.where(accept[:, None], Y, X)
        logp = np.where(accept, logq, logp)
        history[:, t] = X
        if anchors is not None:
            lr = 1.0 / np.sqrt(t) if learning_rate == "inv_sqrt" else float(learning_rate)
            nu2 = adapt_scale(nu2, np.exp(log_alpha), lr, target_acceptance)
        if t > n_burn:
            accepted += accept
            if (t - n_burn - 1) % thin == 0:
                kept.append(X.copy())
                kept_logp.append(logp.copy())
    n_kept_steps = max(n_iterations - n_burn, 1)
    return ChainResult(np.stack(kept, axis=1), np.stack(kept_logp, axis=1),
                       accepted / n_kept_steps, C * (n_iterations + 1))
