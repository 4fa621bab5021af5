class ConfigurationError(ValueError):
    """Invalid target, sampler or experiment configuration."""


class ParticleSystemDiedError(RuntimeError):
    """Every particle weight became zero."""

    def __init__(self, iteration=None):
        where = "" if iteration is None else f" at iteration {iteration}"
        super().__init__(f"particle system died{where}: all log-weights are -inf")
        self.iteration = iteration
