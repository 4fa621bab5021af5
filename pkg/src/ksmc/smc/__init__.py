from .bridges import BridgeSchedule, BridgeTarget
from .moves import MHResult, adapt_scale, estimate_evidence, mh_rejuvenate, pmc_step
from .particles import ParticleSystem, ess, log_mean_exp, normalize, resample, reweight
from .proposals import (
    GaussianProposal,
    propose_asmc,
    propose_gris,
    propose_kasmc,
    propose_kgris,
    propose_random_walk,
    safe_cholesky,
    weighted_covariance,
)
from .sampler import ALGORITHMS, RUN_COLUMNS, KernelSMC, RunRecord, SamplerConfig, run

__all__ = [
    "ALGORITHMS",
    "BridgeSchedule",
    "BridgeTarget",
    "GaussianProposal",
    "KernelSMC",
    "MHResult",
    "ParticleSystem",
    "RUN_COLUMNS",
    "RunRecord",
    "SamplerConfig",
    "adapt_scale",
    "ess",
    "estimate_evidence",
    "log_mean_exp",
    "mh_rejuvenate",
    "normalize",
    "pmc_step",
    "propose_asmc",
    "propose_gris",
    "propose_kasmc",
    "propose_kgris",
    "propose_random_walk",
    "resample",
    "reweight",
    "run",
    "safe_cholesky",
    "weighted_covariance",
]
