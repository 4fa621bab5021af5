"""Sequences of intermediate targets between an initial density and the target."""

from dataclasses import dataclass

import numpy as np

from ..exceptions import ConfigurationError

__all__ = ["BRIDGE_KINDS", "BridgeSchedule", "BridgeTarget"]

BRIDGE_KINDS = ("geometric", "mixture", "pmc-static")


@dataclass(frozen=True)
class BridgeSchedule:
    """Positions ``rho_1..rho_T`` along the bridge, nondecreasing with ``rho_T = 1``.

    ``pmc-static`` targets the final density at every iteration (all ones).
    """

    kind: str
    rho: tuple

    def __post_init__(self):
        if self.kind not in BRIDGE_KINDS:
            raise ConfigurationError(f"unknown bridge kind {self.kind!r}; choose from {BRIDGE_KINDS}")
        rho = np.asarray(self.rho, dtype=float)
        if rho.ndim != 1 or rho.size < 1:
            raise ConfigurationError("rho must be a nonempty sequence")
        if np.any(rho < 0) or np.any(rho > 1) or np.any(np.diff(rho) < 0) or rho[-1] != 1.0:
            raise ConfigurationError("rho must be nondecreasing in [0, 1] and end at exactly 1")
        if self.kind == "pmc-static" and np.any(rho != 1.0):
            raise ConfigurationError("pmc-static schedules are all ones")
        object.__setattr__(self, "rho", tuple(float(r) for r in rho))

    @classmethod
    def linear(cls, n_iterations, kind="geometric"):
        """``rho_t = t / T``."""
        T = int(n_iterations)
        if T < 1:
            raise ConfigurationError("need at least one iteration")
        if kind == "pmc-static":
            return cls(kind, (1.0,) * T)
        return cls(kind, tuple(np.arange(1, T + 1) / T))

    @classmethod
    def exponential(cls, n_iterations, rho_min=1e-4, kind="geometric"):
        """``rho_t`` equally spaced in log scale from ``rho_min`` to 1.

        Keeps the per-step change of a Gaussian bridge's precision at a
        constant ratio, which avoids weight collapse when the initial
        distribution is much wider than the target.
        """
        T = int(n_iterations)
        if T < 1:
            raise ConfigurationError("need at least one iteration")
        if not 0 < rho_min <= 1:
            raise ConfigurationError("rho_min must lie in (0, 1]")
        if kind == "pmc-static":
            return cls(kind, (1.0,) * T)
        if T == 1:
            return cls(kind, (1.0,))
        rho = np.exp(np.linspace(np.log(rho_min), 0.0, T))
        rho[-1] = 1.0
        return cls(kind, tuple(rho))

    def __len__(self):
        return len(self.rho)


class BridgeTarget:
    """The intermediate density ``pi_rho`` built from cached raw log-densities.

    Evaluation is split in two: :meth:`evaluate` computes the (possibly
    noisy) raw values ``log pi_0(x)`` and ``log pi(x)`` once per particle, and
    :meth:`combine` turns cached raw values into ``log pi_rho``.
    """

    def __init__(self, initial, target, rho=1.0, kind="geometric"):
        if kind not in BRIDGE_KINDS:
            raise ConfigurationError(f"unknown bridge kind {kind!r}")
        self.initial = initial
        self.target = target
        self.rho = float(rho)
        self.kind = kind

    def at(self, rho):
        return BridgeTarget(self.initial, self.target, rho, self.kind)

    def evaluate(self, X, rng=None):
        log1 = np.atleast_1d(self.target.log_density(X, rng=rng))
        if self.initial is None:
            log0 = np.zeros_like(log1)
        else:
            log0 = np.atleast_1d(self.initial.log_density(X))
        return log0, log1

    def combine(self, log0, log1):
        rho = self.rho
        if rho == 0.0:
            return np.asarray(log0, dtype=float)
        if rho == 1.0:
            return np.asarray(log1, dtype=float)
        if self.kind == "mixture":
            return np.logaddexp(np.log1p(-rho) + log0, np.log(rho) + log1)
        with np.errstate(invalid="ignore"):
            out = (1.0 - rho) * log0 + rho * log1
        return np.where(np.isnan(out), -np.inf, out)

    def __call__(self, X, rng=None):
        return self.combine(*self.evaluate(X, rng))

    def grad_log_density(self, X):
        """Exact gradient of ``log pi_rho`` (geometric / static bridges only)."""
        g1 = self.target.grad_log_density(X)
        if self.rho == 1.0 or self.initial is None:
            return g1
        if self.kind != "geometric":
            raise ConfigurationError("exact gradients are only available on geometric bridges")
        return (1.0 - self.rho) * self.initial.grad_log_density(X) + self.rho * g1

    @classmethod
    def from_callable(cls, log_density):
        """Wrap a plain ``X -> log pi(X)`` callable as a static target."""
        return cls(None, _CallableTarget(log_density), 1.0, "pmc-static")


class _CallableTarget:
    def __init__(self, fn):
        self.fn = fn

    def log_density(self, X, rng=None):
        return self.fn(X)
