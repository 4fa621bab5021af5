import numpy as np
import pytest

from ksmc.diagnostics import (
    MMDReference,
    covariance_rmse,
    mmd,
    mode_coverage,
    polynomial_features,
    pooled_moments,
    weighted_moments,
)
from ksmc.smc import ParticleSystem


def brute_mmd2(X, Y, k):
    kxx = np.mean([[k(a, b) for b in X] for a in X])
    kyy = np.mean([[k(a, b) for b in Y] for a in Y])
    kxy = np.mean([[k(a, b) for b in Y] for a in X])
    return kxx + kyy - 2 * kxy


def test_identical_samples(rng):
    X = rng.normal(size=(20, 3))
    assert mmd(X, X).value < 1e-12
    assert mmd(X, X, kernel="gaussian").value < 1e-12
    small = np.array([[0.0], [1.0]])
    assert mmd(small, small.copy(), kernel="polynomial").value == 0.0


def test_polynomial_matches_double_loop(rng):
    X, Y = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    res = mmd(X, Y, kernel="polynomial", degree=3, offset=1.0)
    np.testing.assert_allclose(res.mmd2, brute_mmd2(X, Y, lambda a, b: (a @ b + 1) ** 3), atol=1e-12)
    assert res.value == pytest.approx(np.sqrt(res.mmd2))


def test_polynomial_features_inner_product(rng):
    X, Y = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
    for degree, offset in ((3, 1.0), (2, 0.5)):
        F, G = polynomial_features(X, degree, offset), polynomial_features(Y, degree, offset)
        np.testing.assert_allclose(F @ G.T, (X @ Y.T + offset) ** degree, rtol=1e-12)


def test_unbiased_and_gaussian_estimators(rng):
    X, Y = rng.normal(size=(6, 2)), rng.normal(size=(5, 2)) + 0.3
    ell = 0.8
    k = lambda a, b: np.exp(-np.sum((a - b) ** 2) / (2 * ell**2))  # noqa: E731
    np.testing.assert_allclose(mmd(X, Y, kernel="gaussian", lengthscale=ell).mmd2, brute_mmd2(X, Y, k),
                               atol=1e-12)
    poly = lambda a, b: (a @ b + 1) ** 3  # noqa: E731
    n, m = len(X), len(Y)
    kxx = sum(poly(X[i], X[j]) for i in range(n) for j in range(n) if i != j) / (n * (n - 1))
    kyy = sum(poly(Y[i], Y[j]) for i in range(m) for j in range(m) if i != j) / (m * (m - 1))
    kxy = np.mean([[poly(a, b) for b in Y] for a in X])
    np.testing.assert_allclose(mmd(X, Y, estimator="unbiased").mmd2, kxx + kyy - 2 * kxy, rtol=1e-10)


def test_unbiased_can_be_negative(rng):
    vals = [mmd(rng.normal(size=(10, 1)), rng.normal(size=(10, 1)), estimator="unbiased") for _ in range(20)]
    assert min(v.mmd2 for v in vals) < 0
    assert all(v.value >= 0 for v in vals)


def test_mmd_errors(rng):
    with pytest.raises(ValueError):
        mmd(rng.normal(size=(5, 2)), rng.normal(size=(5, 3)))
    with pytest.raises(ValueError):
        mmd(rng.normal(size=(1, 2)), rng.normal(size=(5, 2)))
    with pytest.raises(ValueError):
        mmd(rng.normal(size=(5, 2)), rng.normal(size=(5, 2)), estimator="unbiased", x_weights=np.ones(5))


def test_weighted_mmd_equals_replicated(rng):
    X, Y = rng.normal(size=(4, 2)), rng.normal(size=(30, 2))
    counts = np.array([1, 3, 2, 4])
    np.testing.assert_allclose(mmd(X, Y, x_weights=counts).mmd2, mmd(np.repeat(X, counts, axis=0), Y).mmd2,
                               rtol=1e-10)


@pytest.mark.invariant
def test_mmd_symmetry_and_permutation(rng):
    for kernel in ("polynomial", "gaussian"):
        for estimator in ("biased", "unbiased"):
            X, Y = rng.normal(size=(15, 3)), rng.normal(size=(12, 3)) * 1.5
            a = mmd(X, Y, kernel=kernel, estimator=estimator).mmd2
            np.testing.assert_allclose(mmd(Y, X, kernel=kernel, estimator=estimator).mmd2, a, rtol=1e-10)
            b = mmd(X[rng.permutation(15)], Y[rng.permutation(12)], kernel=kernel, estimator=estimator).mmd2
            np.testing.assert_allclose(b, a, rtol=1e-10, atol=1e-12)


@pytest.mark.invariant
def test_mmd_shrinks_with_sample_size():
    def med(n):
        vals = []
        for s in range(10):
            r = np.random.default_rng(s)
            vals.append(mmd(r.normal(size=(n, 2)), r.normal(size=(n, 2))).value)
        return np.median(vals)

    assert med(100) > med(10000)


def test_reference_scorer_matches_mmd(rng):
    Y = rng.normal(size=(500, 3)) * [1, 5, 0.1]
    X = rng.normal(size=(40, 3))
    w = rng.uniform(size=40)
    ref = MMDReference(Y)
    np.testing.assert_allclose(ref.score(X, w).mmd2, mmd(X, Y, reference=Y, x_weights=w).mmd2, rtol=1e-10)
    np.testing.assert_allclose(ref.score(X, estimator="unbiased").mmd2,
                               mmd(X, Y, reference=Y, estimator="unbiased").mmd2, rtol=1e-9)


def test_weighted_moments_examples(rng):
    ps = ParticleSystem.uniform([[-1.0], [1.0]])
    mean, cov = weighted_moments(ps)
    np.testing.assert_allclose(mean, [0.0])
    np.testing.assert_allclose(cov, [[1.0]])
    X = rng.normal(size=(30, 2))
    mean, cov = weighted_moments(ParticleSystem.uniform(X))
    np.testing.assert_allclose(mean, X.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(cov, np.cov(X.T, bias=True), atol=1e-12)
    with pytest.raises(ValueError, match="covariance undefined"):
        weighted_moments(ParticleSystem([[2.0], [5.0]], [0.0, -np.inf]))


@pytest.mark.invariant
def test_weighted_moments_invariance(rng):
    X, logw = rng.normal(size=(25, 3)), rng.normal(size=25)
    mean, cov = weighted_moments(ParticleSystem(X, logw))
    perm = rng.permutation(25)
    for other in (ParticleSystem(X, logw + 4.2), ParticleSystem(X[perm], logw[perm])):
        m2, c2 = weighted_moments(other)
        np.testing.assert_allclose(m2, mean, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(c2, cov, rtol=1e-12, atol=1e-14)


def test_pooled_moments(rng):
    A, B = rng.normal(size=(10, 2)), rng.normal(size=(5, 2))
    la, lb = rng.normal(size=10), rng.normal(size=5)
    mean, _ = pooled_moments([(A, la), (B, lb)])
    w = np.exp(np.concatenate([la, lb]))
    np.testing.assert_allclose(mean, w @ np.vstack([A, B]) / w.sum())
    np.testing.assert_allclose(pooled_moments([(A, la), (B, lb)], burn_in=1)[0], np.exp(lb) @ B / np.exp(lb).sum())


def test_covariance_rmse():
    assert covariance_rmse(np.eye(2), np.eye(2)) == 0.0
    assert covariance_rmse(np.zeros((2, 2)), 2 * np.eye(2)) == pytest.approx(np.sqrt(2.0))


def test_mode_coverage_examples(rng):
    modes = np.array([[0.0, 0.0], [1.0, 1.0], [3.0, -1.0]])
    assert mode_coverage(ParticleSystem.uniform(modes), modes, 0.01) == 3
    assert mode_coverage(ParticleSystem.uniform(modes), [], 0.1) == 0
    cluster = modes[1] + 0.02 * rng.normal(size=(50, 2))
    assert mode_coverage(ParticleSystem.uniform(cluster), modes, 0.1) == 1
    # a particle with negligible weight does not count
    ps = ParticleSystem(np.vstack([cluster, modes[2:]]), np.r_[np.zeros(50), -50.0])
    assert mode_coverage(ps, modes, 0.1) == 1
    with pytest.raises(ValueError):
        mode_coverage(ps, modes, 0.0)
