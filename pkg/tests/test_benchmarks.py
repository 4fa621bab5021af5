import numpy as np
import pytest

from ksmc.benchmarks import (
    exact_reference,
    find_modes,
    multistart_reference,
    reflect_sensors,
    reflection_labels,
)
from ksmc.mcmc import kernel_adaptive_metropolis, random_walk_metropolis
from ksmc.targets import BananaTarget, GaussianMixtureTarget, GaussianTarget, generate_sensor_dataset


@pytest.fixture(scope="module")
def sensor():
    t, truth = generate_sensor_dataset(2, 2, random_state=868, locations="unit_square")
    return t, truth


def test_random_walk_metropolis_recovers_moments():
    target = GaussianTarget([1.0, -1.0], [[1.0, 0.6], [0.6, 2.0]])
    res = random_walk_metropolis(target, np.zeros((8, 2)), 6000, random_state=0)
    assert res.samples.shape == (8, 3000, 2)
    X = res.pooled()
    np.testing.assert_allclose(X.mean(axis=0), target.mean, atol=0.15)
    np.testing.assert_allclose(np.cov(X.T), target.cov, atol=0.3)
    assert np.all((res.acceptance > 0.1) & (res.acceptance < 0.6))


def test_kernel_adaptive_metropolis_recovers_moments():
    target = BananaTarget(2, b=0.05, v=4.0)
    res = kernel_adaptive_metropolis(target, np.zeros((4, 2)), 8000, random_state=1)
    X = res.pooled()
    np.testing.assert_allclose(X.mean(axis=0), 0.0, atol=0.3)
    np.testing.assert_allclose(np.var(X, axis=0), np.diag(target.covariance()), rtol=0.25)
    np.testing.assert_allclose(res.log_density[:, -1], target.log_density(res.samples[:, -1]))


def test_chains_are_reproducible():
    target = GaussianTarget([0.0])
    a = kernel_adaptive_metropolis(target, np.zeros((2, 1)), 300, random_state=5)
    b = kernel_adaptive_metropolis(target, np.zeros((2, 1)), 300, random_state=5)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_exact_reference():
    ref = exact_reference(BananaTarget(3), 1000, random_state=0)
    assert ref.n == 1000 and ref.n_modes == 0
    with pytest.raises(TypeError):
        exact_reference(object(), 10)


def test_reflection_preserves_density(sensor, rng):
    t, truth = sensor
    X = rng.uniform(size=(50, 4))
    for pattern in range(4):
        Y = reflect_sensors(t, X, pattern)
        np.testing.assert_array_equal(reflection_labels(t, Y), pattern)
        # base distances are unchanged, so only the prior and the sensor-sensor term can move
        L, M = t.locations(X), t.locations(Y)
        for k in range(2):
            for b in range(2, 4):
                np.testing.assert_allclose(np.linalg.norm(L[:, k] - L[:, b], axis=1),
                                           np.linalg.norm(M[:, k] - M[:, b], axis=1))


def test_reflection_needs_sensor_target():
    with pytest.raises(ValueError):
        reflection_labels(GaussianTarget([0.0, 0.0]), np.zeros((1, 2)))


def test_find_modes_on_mixture():
    mix = GaussianMixtureTarget([0.3, 0.7], [[-3.0, 0.0], [3.0, 1.0]], [np.eye(2), np.eye(2)])
    modes, logp = find_modes(mix, [[-2.5, 0.5], [-3.2, 0.1], [2.0, 2.0]])
    assert len(modes) == 2
    np.testing.assert_allclose(modes[0], [3.0, 1.0], atol=1e-3)
    assert logp[0] > logp[1]


def test_multistart_reference(sensor):
    t, truth = sensor
    ref = multistart_reference(t, 2000, n_chains=8, n_iterations=4000, labels="reflection",
                               n_importance=20000, random_state=0)
    assert ref.samples.shape == (2000, 4)
    assert ref.n_modes >= 1
    np.testing.assert_allclose(sum(ref.cluster_mass.values()), 1.0, atol=1e-9)
    best = max(t.log_density(m) for m in ref.modes)
    assert best >= t.log_density(truth.ravel()) - 1e-6
