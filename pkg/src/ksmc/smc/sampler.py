"""Static SMC / PMC driver for all sampler variants.

Each iteration reweights towards the next bridge target, resamples, refits
the proposal and then either rejuvenates with a Metropolis-Hastings sweep
(RWSMC, ASMC, KASMC) or replaces the particles by a deterministic-mixture
importance sampling step (RW-PMC, GRIS, KGRIS).
"""

import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .._validation import check_generator
from ..emulators import KernelCovarianceEmulator, ScoreMatchingGradientEmulator
from ..exceptions import ConfigurationError
from .bridges import BRIDGE_KINDS, BridgeSchedule, BridgeTarget
from .moves import adapt_scale, mh_rejuvenate, pmc_step
from .particles import ParticleSystem, ess, resample, reweight
from .proposals import (
    propose_asmc,
    propose_gris,
    propose_kasmc,
    propose_kgris,
    propose_random_walk,
    weighted_covariance,
)

__all__ = ["ALGORITHMS", "KernelSMC", "RunRecord", "SamplerConfig", "run"]

MH_ALGORITHMS = ("RWSMC", "ASMC", "KASMC")
PMC_ALGORITHMS = ("RW-PMC", "GRIS", "KGRIS")
ALGORITHMS = MH_ALGORITHMS + PMC_ALGORITHMS


@dataclass
class SamplerConfig:
    """Settings of one sampler run.

    ``spacing`` chooses linear or log-spaced ``rho`` (from ``rho_min``)
    unless ``rho`` is given explicitly. ``nu2=None`` means ``2.38^2 / d``. ``bridge=None`` picks ``geometric``
    for the MH samplers and ``pmc-static`` for the PMC samplers.
    ``learning_rate`` is a constant or ``"inv_sqrt"`` for ``1/sqrt(t)``.
    ``ess_threshold`` is a fraction of N; values >= 1 resample every
    iteration. ``adapt_scale=None`` adapts ``nu2`` for ASMC and KASMC only.
    """

    algorithm: str = "KASMC"
    n_particles: int = 1000
    n_iterations: int = 20
    bridge: str = None
    spacing: str = "linear"
    rho_min: float = 1e-4
    rho: tuple = None
    nu2: float = None
    gamma2: float = 0.01
    drift_step: float = 0.1
    learning_rate: object = 0.1
    target_acceptance: float = 0.234
    ess_threshold: float = 0.5
    resampling: str = "systematic"
    n_mh_steps: int = 1
    max_anchors: int = 500
    n_features: int = 300
    ridge: object = "auto"
    emulator_fit: str = "weighted"
    gradient_mode: str = "accumulate"
    gradient_scale: object = "bandwidth"
    max_drift_factor: float = 10.0
    adapt_scale: bool = None
    keep_history: bool = False
    seed: int = None

    def problems(self):
        """List of human-readable validation failures (empty when valid)."""
        errs = []
        if self.algorithm not in ALGORITHMS:
            errs.append(f"unknown algorithm '{self.algorithm}'")
        for name in ("n_particles", "n_iterations", "n_mh_steps", "max_anchors", "n_features"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                errs.append(f"{name} must be a positive integer, got {value!r}")
        if self.bridge is not None and self.bridge not in BRIDGE_KINDS:
            errs.append(f"unknown bridge '{self.bridge}'")
        if self.nu2 is not None and not self.nu2 > 0:
            errs.append(f"nu2 must be > 0, got {self.nu2}")
        for name in ("gamma2", "drift_step", "max_drift_factor"):
            if not getattr(self, name) > 0:
                errs.append(f"{name} must be > 0, got {getattr(self, name)}")
        lr = self.learning_rate
        if not (lr == "inv_sqrt" or (isinstance(lr, (int, float)) and lr >= 0)):
            errs.append(f"learning_rate must be >= 0 or 'inv_sqrt', got {lr!r}")
        if not 0 < self.target_acceptance < 1:
            errs.append(f"target_acceptance must lie in (0, 1), got {self.target_acceptance}")
        if not self.ess_threshold >= 0:
            errs.append(f"ess_threshold must be >= 0, got {self.ess_threshold}")
        if self.spacing not in ("linear", "exponential"):
            errs.append(f"spacing must be 'linear' or 'exponential', got '{self.spacing}'")
        if not 0 < self.rho_min <= 1:
            errs.append(f"rho_min must lie in (0, 1], got {self.rho_min}")
        if self.resampling not in ("systematic", "multinomial"):
            errs.append(f"unknown resampling scheme '{self.resampling}'")
        if self.emulator_fit not in ("weighted", "resampled"):
            errs.append(f"emulator_fit must be 'weighted' or 'resampled', got '{self.emulator_fit}'")
        if self.gradient_mode not in ("accumulate", "refit"):
            errs.append(f"gradient_mode must be 'accumulate' or 'refit', got '{self.gradient_mode}'")
        if self.rho is not None:
            try:
                BridgeSchedule(self.resolved_bridge(), tuple(self.rho))
            except ConfigurationError as exc:
                errs.append(str(exc))
            else:
                if len(self.rho) != self.n_iterations:
                    errs.append("rho must have n_iterations entries")
        return errs

    def validate(self):
        errs = self.problems()
        if errs:
            raise ConfigurationError("; ".join(errs))
        return self

    def resolved_bridge(self):
        if self.bridge is not None:
            return self.bridge
        return "pmc-static" if self.algorithm in PMC_ALGORITHMS else "geometric"

    def schedule(self):
        if self.rho is not None:
            return BridgeSchedule(self.resolved_bridge(), tuple(self.rho))
        if self.spacing == "exponential":
            return BridgeSchedule.exponential(self.n_iterations, self.rho_min, self.resolved_bridge())
        return BridgeSchedule.linear(self.n_iterations, self.resolved_bridge())

    def initial_nu2(self, dim):
        return 2.38**2 / dim if self.nu2 is None else float(self.nu2)

    def adapts_scale(self):
        if self.adapt_scale is None:
            return self.algorithm in ("ASMC", "KASMC")
        return bool(self.adapt_scale)

    def learning_rate_at(self, t):
        if self.learning_rate == "inv_sqrt":
            return 1.0 / np.sqrt(t)
        return float(self.learning_rate)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigurationError(f"unknown sampler option(s): {', '.join(unknown)}")
        return cls(**data)


RUN_COLUMNS = ("run_id", "algorithm", "t", "rho", "ess", "resampled", "alpha_hat", "nu2",
               "log_evidence_increment", "elapsed_ms")


@dataclass
class RunRecord:
    """Per-iteration diagnostics and the final particle system of one run."""

    algorithm: str
    rho: list = field(default_factory=list)
    ess: list = field(default_factory=list)
    resampled: list = field(default_factory=list)
    alpha_hat: list = field(default_factory=list)
    nu2: list = field(default_factory=list)
    log_evidence_increment: list = field(default_factory=list)
    elapsed_ms: list = field(default_factory=list)
    lengthscale: list = field(default_factory=list)
    particles: ParticleSystem = None
    log_evidence: float = 0.0
    log_z0: float = 0.0
    wall_time: float = 0.0
    n_nonfinite: int = 0
    history: list = field(default_factory=list)

    @property
    def n_iterations(self):
        return len(self.rho)

    def rows(self, run_id):
        """Rows of the per-iteration CSV (columns ``RUN_COLUMNS``)."""
        return [
            {
                "run_id": run_id,
                "algorithm": self.algorithm,
                "t": t + 1,
                "rho": self.rho[t],
                "ess": self.ess[t],
                "resampled": int(self.resampled[t]),
                "alpha_hat": self.alpha_hat[t],
                "nu2": self.nu2[t],
                "log_evidence_increment": self.log_evidence_increment[t],
                "elapsed_ms": self.elapsed_ms[t],
            }
            for t in range(self.n_iterations)
        ]

    def particle_rows(self, run_id):
        ps = self.particles
        w = ps.weights
        out = []
        for i in range(ps.size):
            row = {"run_id": run_id, "particle_id": i, "weight": w[i]}
            row.update({f"x_{k}": ps.X[i, k] for k in range(ps.dim)})
            out.append(row)
        return out


def _as_config(config, overrides):
    if config is None:
        config = SamplerConfig()
    elif isinstance(config, dict):
        config = SamplerConfig.from_dict(config)
    if overrides:
        config = SamplerConfig(**{**asdict(config), **overrides})
    return config.validate()


def run(config, target, initial, random_state=None, callback=None, record_timing=True, **overrides):
    """Run one sampler.

    Parameters
    ----------
    config : SamplerConfig or dict
    target : TargetDensity
        Final target (may be noisy).
    initial : object with ``sample(n, rng)`` and normalized ``log_density``
        The initial distribution; its ``log_normalizer`` (default 0) is log Z_0.
    random_state : int, Generator or None
        Defaults to ``config.seed``.
    callback : callable, optional
        ``callback(t, particles)`` after every iteration.
    record_timing : bool
        When False ``elapsed_ms`` is recorded as 0 so records are bitwise
        reproducible.
    """
    config = _as_config(config, overrides)
    rng = check_generator(config.seed if random_state is None else random_state)
    algo = config.algorithm
    N, d = config.n_particles, target.dim
    schedule = config.schedule()
    bridge = BridgeTarget(initial, target, 0.0, schedule.kind)
    is_pmc = algo in PMC_ALGORITHMS
    if algo == "GRIS" and (target.is_noisy or not target.has_gradient):
        raise ConfigurationError("GRIS needs a deterministic target with an exact gradient")

    started = time.perf_counter()
    X0 = initial.sample(N, rng)
    log0, log1 = bridge.evaluate(X0, rng)
    ps = ParticleSystem.uniform(X0, log0=log0, log1=log1)

    nu2 = config.initial_nu2(d)
    log_z0 = float(getattr(initial, "log_normalizer", 0.0) or 0.0)
    log_z = log_z0
    record = RunRecord(algo, log_z0=log_z0)
    cov_emulator = KernelCovarianceEmulator(
        nu2=nu2, gamma2=config.gamma2, max_anchors=config.max_anchors,
        gradient_scale=config.gradient_scale, random_state=rng,
    )
    grad_emulator = ScoreMatchingGradientEmulator(
        n_components=config.n_features, ridge=config.ridge, random_state=rng,
    )
    rho_prev = 0.0
    for t, rho in enumerate(schedule.rho, start=1):
        tick = time.perf_counter()
        prev, cur = bridge.at(rho_prev), bridge.at(rho)
        ps, increment = reweight(
            ps,
            prev.combine(ps.cache["log0"], ps.cache["log1"]),
            cur.combine(ps.cache["log0"], ps.cache["log1"]),
            iteration=t,
        )
        current_ess = ess(ps)
        weights = ps.weights
        sigma = weighted_covariance(ps.X, weights)

        if algo == "KASMC" and config.emulator_fit == "weighted":
            cov_emulator.set_params(nu2=nu2).fit(ps.X, weights)
        if algo == "KGRIS":
            if config.gradient_mode == "refit" or not hasattr(grad_emulator, "coef_"):
                grad_emulator.fit(ps.X, weights)
            else:
                grad_emulator.partial_fit(ps.X, weights)

        do_resample = is_pmc or config.ess_threshold >= 1 or current_ess < config.ess_threshold * N
        if do_resample:
            ps = resample(ps, config.resampling, rng, iteration=t)
        if algo == "KASMC" and config.emulator_fit == "resampled":
            cov_emulator.set_params(nu2=nu2).fit(ps.X)

        max_drift = config.max_drift_factor * np.sqrt(max(np.trace(sigma), 0.0))
        if algo == "RWSMC":
            proposal = propose_random_walk(nu2 * np.eye(d))
        elif algo == "ASMC":
            proposal = propose_asmc(sigma, nu2, config.gamma2)
        elif algo == "KASMC":
            proposal = propose_kasmc(cov_emulator)
        elif algo == "RW-PMC":
            proposal = propose_asmc(sigma, nu2, config.gamma2)
        elif algo == "GRIS":
            proposal = propose_gris(cur.grad_log_density, config.drift_step, nu2, sigma,
                                    config.gamma2, max_drift)
        else:
            proposal = propose_kgris(grad_emulator, config.drift_step, nu2, sigma,
                                     config.gamma2, max_drift)

        nu2_used = nu2
        if is_pmc:
            ps, log_zt = pmc_step(ps, cur, proposal, rng, iteration=t)
            increment, log_z, alpha_hat = log_zt - log_z, log_zt, np.nan
            if config.keep_history:
                record.history.append((ps.X.copy(), ps.cache["logw_unnormalized"].copy()))
        else:
            alphas = []
            for _ in range(config.n_mh_steps):
                result = mh_rejuvenate(ps, cur, proposal, rng)
                ps = result.particles
                alphas.append(result.alpha_hat)
                record.n_nonfinite += result.n_nonfinite
            alpha_hat = float(np.mean(alphas))
            log_z += increment
            if config.adapts_scale():
                nu2 = adapt_scale(nu2, alpha_hat, config.learning_rate_at(t), config.target_acceptance)
            if config.keep_history:
                record.history.append((ps.X.copy(), ps.logw.copy()))

        record.rho.append(rho)
        record.ess.append(current_ess)
        record.resampled.append(bool(do_resample))
        record.alpha_hat.append(alpha_hat)
        record.nu2.append(nu2_used)
        record.log_evidence_increment.append(increment)
        record.lengthscale.append(getattr(cov_emulator, "lengthscale_", np.nan))
        record.elapsed_ms.append(1000.0 * (time.perf_counter() - tick) if record_timing else 0.0)
        if callback is not None:
            callback(t, ps)
        rho_prev = rho

    record.particles = ps
    record.log_evidence = log_z
    record.wall_time = time.perf_counter() - started if record_timing else 0.0
    return record


class KernelSMC(BaseEstimator):
    """Scikit-learn style front end to :func:`run`.

    Constructor parameters mirror :class:`SamplerConfig` (``seed`` is called
    ``random_state`` here). ``fit(target, initial)`` runs the sampler and
    stores ``particles_``, ``weights_``, ``log_evidence_`` and ``record_``.

    Examples
    --------
    >>> from ksmc import KernelSMC, BananaTarget, GaussianTarget
    >>> smc = KernelSMC(algorithm="KASMC", n_particles=200, n_iterations=10, random_state=0)
    >>> smc = smc.fit(BananaTarget(dim=2), initial=GaussianTarget([0, 0], 100.0))
    >>> smc.particles_.shape
    (200, 2)
    """

    def __init__(self, algorithm="KASMC", n_particles=1000, n_iterations=20, bridge=None,
                 spacing="linear", rho_min=1e-4, rho=None,
                 nu2=None, gamma2=0.01, drift_step=0.1, learning_rate=0.1, target_acceptance=0.234,
                 ess_threshold=0.5, resampling="systematic", n_mh_steps=1, max_anchors=500,
                 n_features=300, ridge="auto", emulator_fit="weighted", gradient_mode="accumulate",
                 gradient_scale="bandwidth", max_drift_factor=10.0, adapt_scale=None,
                 keep_history=False, random_state=None):
        self.algorithm = algorithm
        self.n_particles = n_particles
        self.n_iterations = n_iterations
        self.bridge = bridge
        self.spacing = spacing
        self.rho_min = rho_min
        self.rho = rho
        self.nu2 = nu2
        self.gamma2 = gamma2
        self.drift_step = drift_step
        self.learning_rate = learning_rate
        self.target_acceptance = target_acceptance
        self.ess_threshold = ess_threshold
        self.resampling = resampling
        self.n_mh_steps = n_mh_steps
        self.max_anchors = max_anchors
        self.n_features = n_features
        self.ridge = ridge
        self.emulator_fit = emulator_fit
        self.gradient_mode = gradient_mode
        self.gradient_scale = gradient_scale
        self.max_drift_factor = max_drift_factor
        self.adapt_scale = adapt_scale
        self.keep_history = keep_history
        self.random_state = random_state

    def to_config(self):
        params = self.get_params()
        params["seed"] = params.pop("random_state")
        if isinstance(params["seed"], np.random.Generator):
            params["seed"] = None
        return SamplerConfig(**params).validate()

    def fit(self, target, initial, callback=None):
        config = self.to_config()
        rs = self.random_state if isinstance(self.random_state, np.random.Generator) else config.seed
        self.record_ = run(config, target, initial, random_state=rs, callback=callback)
        ps = self.record_.particles
        self.particles_ = ps.X
        self.weights_ = ps.weights
        self.log_evidence_ = self.record_.log_evidence
        self.n_features_in_ = target.dim
        return self

    def sample(self, n_samples, random_state=None):
        """Equally weighted draws from the final weighted particle system."""
        check_is_fitted(self, "particles_")
        rng = check_generator(random_state)
        idx = rng.choice(len(self.weights_), size=int(n_samples), p=self.weights_)
        return self.particles_[idx]

    @property
    def mean_(self):
        check_is_fitted(self, "particles_")
        return self.weights_ @ self.particles_

    @property
    def covariance_(self):
        check_is_fitted(self, "particles_")
        return weighted_covariance(self.particles_, self.weights_)
