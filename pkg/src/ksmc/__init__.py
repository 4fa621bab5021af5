"""Kernel sequential Monte Carlo samplers for static targets."""

__version__ = "0.1.0"

from .diagnostics import MMDResult, covariance_rmse, mmd, mode_coverage, pooled_moments, weighted_moments
from .emulators import KernelCovarianceEmulator, ScoreMatchingGradientEmulator
from .exceptions import ConfigurationError, ParticleSystemDiedError
from .kernels import FourierFeatureMap, RandomFourierFeatures, median_heuristic, sample_feature_map
from .smc import KernelSMC, ParticleSystem, RunRecord, SamplerConfig, run
from .targets import (
    BananaTarget,
    GaussianMixtureTarget,
    GaussianTarget,
    NoisyTarget,
    SensorNetworkTarget,
    generate_sensor_dataset,
)

__all__ = [
    "BananaTarget",
    "ConfigurationError",
    "FourierFeatureMap",
    "GaussianMixtureTarget",
    "GaussianTarget",
    "KernelCovarianceEmulator",
    "KernelSMC",
    "MMDResult",
    "NoisyTarget",
    "ParticleSystem",
    "ParticleSystemDiedError",
    "RandomFourierFeatures",
    "RunRecord",
    "SamplerConfig",
    "ScoreMatchingGradientEmulator",
    "SensorNetworkTarget",
    "covariance_rmse",
    "generate_sensor_dataset",
    "median_heuristic",
    "mmd",
    "mode_coverage",
    "pooled_moments",
    "run",
    "sample_feature_map",
    "weighted_moments",
]
