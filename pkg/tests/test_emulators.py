import numpy as np
import pytest
from scipy.optimize import minimize

from ksmc.emulators import (
    KernelCovarianceEmulator,
    ScoreMatchingGradientEmulator,
    SingularSystemError,
    emulator_log_grad,
    fit_covariance_emulator,
    fit_gradient_emulator,
    proposal_covariance,
)
from ksmc.kernels import embed, embed_grad, embed_hess_diag, kernel_grad_x, sample_feature_map

from conftest import central_difference


def brute_covariance(emu, x, scale):
    """gamma2 I + nu2 M C_w M^T with explicit M and C_w."""
    Z, w, ell = emu.anchors_, emu.anchor_weights_, emu.lengthscale_
    M = scale * np.stack([kernel_grad_x(x, z, ell) for z in Z], axis=1)
    C = np.diag(w) - np.outer(w, w)
    return emu.gamma2 * np.eye(len(x)) + emu.nu2 * M @ C @ M.T


# covariance emulator

def test_no_subsampling_for_small_systems(rng):
    X = rng.normal(size=(20, 2))
    emu = fit_covariance_emulator(X, max_anchors=500)
    np.testing.assert_array_equal(emu.anchors_, X)
    np.testing.assert_allclose(emu.anchor_weights_, 1 / 20)


def test_fit_errors(rng):
    with pytest.raises(ValueError):
        fit_covariance_emulator(rng.normal(size=(1, 2)))
    with pytest.raises(ValueError, match="degenerate weights"):
        fit_covariance_emulator(rng.normal(size=(3, 2)), np.zeros(3))


def test_degenerate_weights_reduce_to_first_particle(rng):
    X = rng.normal(size=(3, 2))
    emu = fit_covariance_emulator(X, [1.0, 0.0, 0.0], nu2=1.3, gamma2=0.05)
    single = KernelCovarianceEmulator(nu2=1.3, gamma2=0.05)
    single.fit(np.vstack([X[:1], X[:1] + 1.0]), [1.0, 0.0])
    for x in rng.normal(size=(5, 2)):
        np.testing.assert_allclose(emu.proposal_covariance(x), single.proposal_covariance(x))
        np.testing.assert_allclose(emu.proposal_covariance(x), 0.05 * np.eye(2), atol=1e-15)


@pytest.mark.parametrize("scale", [2.0, "bandwidth"])
def test_matches_explicit_formula(rng, scale):
    X = rng.normal(size=(30, 3))
    w = rng.uniform(size=30)
    emu = fit_covariance_emulator(X, w, nu2=0.7, gamma2=0.02, gradient_scale=scale)
    s = 2.0 if scale == 2.0 else emu.lengthscale_**2
    for x in rng.normal(size=(5, 3)):
        np.testing.assert_allclose(proposal_covariance(emu, x), brute_covariance(emu, x, s), atol=1e-12)


def test_two_anchor_hand_computation():
    Z = np.array([[0.0], [1.0]])
    w = np.array([0.25, 0.75])
    emu = fit_covariance_emulator(Z, w, nu2=0.8, gamma2=0.1, gradient_scale=2.0, lengthscale=1.0)
    x = 0.4
    k1 = -(x - 0.0) * np.exp(-(x**2) / 2)
    k2 = -(x - 1.0) * np.exp(-((x - 1.0) ** 2) / 2)
    g = np.array([k1, k2])
    C = np.diag(w) - np.outer(w, w)
    expected = 0.1 + 0.8 * 4 * g @ C @ g
    np.testing.assert_allclose(emu.proposal_covariance([x]), [[expected]], atol=1e-12)


def test_single_anchor_and_zero_scale(rng):
    X = rng.normal(size=(10, 2))
    for x in rng.normal(size=(4, 2)):
        one = fit_covariance_emulator(np.vstack([X[:1], X[1:2]]), [1.0, 0.0], gamma2=0.3)
        np.testing.assert_allclose(one.proposal_covariance(x), 0.3 * np.eye(2), atol=1e-15)
        flat = fit_covariance_emulator(X, nu2=0.0, gamma2=0.3)
        np.testing.assert_allclose(flat.proposal_covariance(x), 0.3 * np.eye(2), atol=1e-15)


@pytest.mark.invariant
def test_covariance_symmetric_and_floor(rng):
    for _ in range(30):
        n, d = rng.integers(2, 40), rng.integers(1, 5)
        gamma2 = rng.uniform(1e-3, 1.0)
        emu = fit_covariance_emulator(rng.normal(size=(n, d)) * rng.uniform(0.1, 10),
                                      rng.uniform(size=n), nu2=rng.uniform(0, 5), gamma2=gamma2)
        covs = emu.proposal_covariance(rng.normal(size=(10, d)) * 3)
        np.testing.assert_array_equal(covs, covs.transpose(0, 2, 1))
        assert np.linalg.eigvalsh(covs).min() >= gamma2 - 1e-10


@pytest.mark.invariant
def test_weight_rescaling_invariance(rng):
    X = rng.normal(size=(40, 2))
    w = rng.uniform(size=40)
    x = rng.normal(size=(6, 2))
    a = fit_covariance_emulator(X, w).proposal_covariance(x)
    b = fit_covariance_emulator(X, 7 * w).proposal_covariance(x)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)
    fmap = sample_feature_map(2, 20, random_state=0)
    ga, gb = fit_gradient_emulator(X, w, fmap), fit_gradient_emulator(X, 7 * w, fmap)
    np.testing.assert_allclose(ga.C_sum_, gb.C_sum_, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(ga.coef_, gb.coef_, rtol=1e-7)


def test_anchor_thinning(rng):
    X = rng.normal(size=(2000, 2))
    emu = fit_covariance_emulator(X, max_anchors=300, random_state=0)
    assert len(emu.anchors_) <= 300
    np.testing.assert_allclose(emu.anchor_weights_.sum(), 1.0)


def test_local_alignment_on_banana():
    from ksmc.targets import BananaTarget
    from ksmc.smc.proposals import weighted_covariance

    target = BananaTarget(2, b=0.1, v=100.0)
    anchors = target.sample(1000, random_state=1)
    emu = fit_covariance_emulator(anchors, nu2=1.0)
    lead = np.linalg.eigh(weighted_covariance(anchors, np.ones(1000)))[1][:, -1]
    y1 = np.linspace(-12, 12, 20)
    ridge = np.column_stack([y1, 0.1 * (y1**2 - 100)])
    tangent = np.column_stack([np.ones_like(y1), 0.2 * y1])
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    local = np.linalg.eigh(emu.proposal_covariance(ridge))[1][:, :, -1]
    cos_local = np.abs(np.sum(local * tangent, axis=1))
    cos_global = np.abs(tangent @ lead)
    assert np.median(cos_local) > np.median(cos_global)


# gradient emulator

def objective_terms(X, w, fmap):
    """b and C from the per-sample definitions with explicit derivatives."""
    w = w / w.sum()
    b = -sum(wi * embed_hess_diag(fmap, x).sum(axis=1) for wi, x in zip(w, X))
    C = sum(wi * embed_grad(fmap, x) @ embed_grad(fmap, x).T for wi, x in zip(w, X))
    return b, C


def test_statistics_match_definition(rng):
    X, w = rng.normal(size=(6, 2)), rng.uniform(size=6)
    fmap = sample_feature_map(2, 5, random_state=rng)
    emu = fit_gradient_emulator(X, w, fmap, ridge=0.0)
    b, C = objective_terms(X, w, fmap)
    np.testing.assert_allclose(emu.b_sum_, b, atol=1e-12)
    np.testing.assert_allclose(emu.C_sum_, C, atol=1e-12)


def test_score_matching_oracle_small_instance(rng):
    X, w = rng.normal(size=(5, 2)), rng.uniform(size=5)
    fmap = sample_feature_map(2, 3, random_state=rng)
    lam = 1e-3
    b, C = objective_terms(X, w, fmap)
    A = C + lam * np.eye(3)
    res = minimize(lambda t: 0.5 * t @ A @ t - t @ b, np.zeros(3), jac=lambda t: A @ t - b,
                   hess=lambda t: A, method="trust-exact", options=dict(gtol=1e-14))
    np.testing.assert_allclose(fit_gradient_emulator(X, w, fmap, ridge=lam).coef_, res.x, atol=1e-6)


def test_duplicated_sample_collapse(rng):
    x = rng.normal(size=(1, 2))
    fmap = sample_feature_map(2, 6, random_state=0)
    a = fit_gradient_emulator(np.vstack([x, x]), [0.5, 0.5], fmap, ridge=1e-3)
    b = fit_gradient_emulator(x, [1.0], fmap, ridge=1e-3)
    np.testing.assert_allclose(a.coef_, b.coef_, rtol=1e-12)


@pytest.mark.invariant
def test_uniform_weights_equal_unweighted(rng):
    X = rng.normal(size=(50, 3))
    fmap = sample_feature_map(3, 30, random_state=1)
    a = fit_gradient_emulator(X, None, fmap)
    b = fit_gradient_emulator(X, np.full(50, 0.02), fmap)
    np.testing.assert_array_equal(a.coef_, b.coef_)


def test_singular_system():
    fmap = sample_feature_map(2, 10, random_state=0)
    with pytest.raises(SingularSystemError, match="singular system; increase ridge"):
        fit_gradient_emulator(np.zeros((1, 2)), None, fmap, ridge=0.0)


def test_gaussian_score_oracle():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(5000, 2))
    emu = ScoreMatchingGradientEmulator(n_components=300, random_state=1).fit(X)
    r, a = np.sqrt(rng.uniform(size=100)), rng.uniform(0, 2 * np.pi, size=100)
    test = np.column_stack([r * np.cos(a), r * np.sin(a)])
    assert np.mean(np.sum((emu.gradient(test) + test) ** 2, axis=1)) < 0.05
    assert np.linalg.norm(emulator_log_grad(emu, np.zeros(2))) < 0.1


def test_gradient_matches_finite_difference(rng):
    emu = ScoreMatchingGradientEmulator(n_components=40, random_state=0).fit(rng.normal(size=(200, 3)))
    for x in rng.normal(size=(10, 3)):
        fd = central_difference(emu.score_samples, x)
        np.testing.assert_allclose(emu.gradient(x), fd, atol=1e-6)
        np.testing.assert_allclose(emu.gradient(x), embed_grad(emu.feature_map_, x).T @ emu.coef_)


def test_zero_theta_gives_zero_gradient(rng):
    emu = ScoreMatchingGradientEmulator(n_components=10, random_state=0).fit(rng.normal(size=(20, 2)))
    emu.coef_ = np.zeros(10)
    np.testing.assert_array_equal(emu.gradient(rng.normal(size=2)), 0.0)
    assert emu.score_samples(np.ones(2)) == 0.0


def test_partial_fit_accumulates(rng):
    fmap = sample_feature_map(2, 15, random_state=0)
    A, B = rng.normal(size=(30, 2)), rng.normal(size=(40, 2)) + 1
    wB = rng.uniform(size=40)
    emu = ScoreMatchingGradientEmulator(feature_map=fmap, ridge=1e-3).partial_fit(A).partial_fit(B, wB)
    bA, CA = objective_terms(A, np.ones(30), fmap)
    bB, CB = objective_terms(B, wB, fmap)
    assert emu.n_batches_ == 2
    np.testing.assert_allclose(emu.b_sum_, bA + bB, atol=1e-12)
    expected = np.linalg.solve((CA + CB) / 2 + 1e-3 * np.eye(15), (bA + bB) / 2)
    np.testing.assert_allclose(emu.coef_, expected, rtol=1e-8)
    assert ScoreMatchingGradientEmulator(feature_map=fmap).fit(B).n_batches_ == 1


@pytest.mark.invariant
def test_gradient_error_decreases_with_n():
    def err(n, seed):
        rng = np.random.default_rng(seed)
        emu = ScoreMatchingGradientEmulator(n_components=100, random_state=seed).fit(rng.normal(size=(n, 2)))
        test = rng.uniform(-1, 1, size=(200, 2))
        return np.mean(np.sum((emu.gradient(test) + test) ** 2, axis=1))

    med = [np.median([err(n, s) for s in range(10)]) for n in (500, 2000, 8000)]
    assert med[0] > med[1] > med[2]
