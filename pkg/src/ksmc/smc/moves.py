"""Rejuvenation moves, scale adaptation and the evidence recursion."""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .._validation import check_generator
from ..exceptions import ParticleSystemDiedError
from .bridges import BridgeTarget
from .particles import ParticleSystem

__all__ = ["MHResult", "adapt_scale", "estimate_evidence", "mh_rejuvenate", "pmc_step"]

NU2_FLOOR = 1e-8


def _as_bridge(target):
    return target if isinstance(target, BridgeTarget) else BridgeTarget.from_callable(target)


def _cached(ps, bridge, rng):
    if "log0" not in ps.cache or "log1" not in ps.cache:
        log0, log1 = bridge.evaluate(ps.X, rng)
        ps.cache.update(log0=log0, log1=log1)
    return ps.cache["log0"], ps.cache["log1"]


@dataclass
class MHResult:
    particles: ParticleSystem
    alpha_hat: float
    n_nonfinite: int
    accepted: np.ndarray


def mh_rejuvenate(ps, target, proposal, random_state=None):
    """One Metropolis-Hastings sweep over every particle.

    ``target`` is a :class:`BridgeTarget` (or a plain log-density callable).
    The current particles' log-densities come from ``ps.cache`` when present,
    so pseudo-marginal estimates are reused rather than redrawn. Weights are
    left untouched: the move is ``pi_t``-invariant.

    ``alpha_hat`` is the Rao-Blackwellised acceptance rate, the average of the
    per-particle acceptance probabilities. Proposals with a non-finite
    Hastings ratio count as rejections and are reported in ``n_nonfinite``.
    """
    rng = check_generator(random_state)
    bridge = _as_bridge(target)
    log0, log1 = _cached(ps, bridge, rng)
    X = ps.X
    Y = proposal.sample(X, rng)
    new0, new1 = bridge.evaluate(Y, rng)
    with np.errstate(invalid="ignore", over="ignore"):
        log_ratio = (
            bridge.combine(new0, new1) + proposal.log_density(X, Y)
            - bridge.combine(log0, log1) - proposal.log_density(Y, X)
        )
    nonfinite = np.isnan(log_ratio) | np.isposinf(log_ratio) | ~np.all(np.isfinite(Y), axis=1)
    log_ratio = np.where(nonfinite, -np.inf, log_ratio)
    alpha = np.exp(np.minimum(log_ratio, 0.0))
    accept = rng.uniform(size=len(alpha)) < alpha
    out = ParticleSystem(
        np.where(accept[:, None], Y, X),
        ps.logw.copy(),
        {
            **{k: v for k, v in ps.cache.items() if k not in ("log0", "log1")},
            "log0": np.where(accept, new0, log0),
            "log1": np.where(accept, new1, log1),
        },
    )
    return MHResult(out, float(alpha.mean()), int(nonfinite.sum()), accept)


def pmc_step(ps, target, proposal, random_state=None, iteration=None):
    """Deterministic-mixture importance sampling step.

    Draws exactly one point from each component ``q(. | z_i)`` (``ps`` must be
    equally weighted), then weights every draw against the full mixture
    ``(1/N) sum_j q(. | z_j)``. Returns ``(system, log_Z_hat)`` where
    ``log_Z_hat`` is the log mean of the unnormalized weights, an unbiased
    estimate of the target's normalizing constant on the natural scale.
    """
    rng = check_generator(random_state)
    bridge = _as_bridge(target)
    Z = ps.X
    Y = proposal.sample(Z, rng)
    log0, log1 = bridge.evaluate(Y, rng)
    with np.errstate(invalid="ignore"):
        logw = bridge.combine(log0, log1) - proposal.mixture_log_density(Y, Z)
    logw = np.where(np.isnan(logw), -np.inf, logw)
    total = logsumexp(logw)
    if not np.isfinite(total):
        raise ParticleSystemDiedError(iteration)
    log_z = float(total - np.log(len(logw)))
    out = ParticleSystem(Y, logw - total, {"log0": log0, "log1": log1, "logw_unnormalized": logw})
    return out, log_z


def adapt_scale(nu2, alpha_hat, learning_rate, target_acceptance=0.234, floor=NU2_FLOOR):
    """Stochastic-approximation step ``nu2 + lambda (alpha_hat - alpha_opt)``, floored.

    Scalars give a float; arrays (one scale per chain) are updated elementwise.
    """
    out = np.maximum(np.asarray(nu2, dtype=float)
                     + np.asarray(learning_rate, dtype=float) * (np.asarray(alpha_hat, dtype=float) - target_acceptance),
                     floor)
    return float(out) if out.ndim == 0 else out


def estimate_evidence(increments, log_z0=0.0):
    """``log Z = log Z_0 + sum_t increment_t``."""
    return float(log_z0) + float(np.sum(increments))
