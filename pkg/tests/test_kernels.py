import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ksmc.kernels import (
    DegeneratePointSetError,
    FourierFeatureMap,
    RandomFourierFeatures,
    embed,
    embed_grad,
    embed_hess_diag,
    kernel_eval,
    kernel_grad_x,
    median_heuristic,
    sample_feature_map,
)

from conftest import central_difference

finite = st.floats(-5, 5, allow_nan=False)


# kernel_eval

@given(arrays(float, 3, elements=finite), st.floats(0.1, 10))
def test_kernel_identity(x, ell):
    assert kernel_eval(x, x, ell) == 1.0


def test_kernel_hand_values():
    np.testing.assert_allclose(kernel_eval([0.0], [2.0], 1.0), np.exp(-2.0), rtol=1e-14)
    np.testing.assert_allclose(kernel_eval([0.0], [2.0], np.sqrt(2.0)), np.exp(-1.0), rtol=1e-14)
    assert kernel_eval([0.0], [2.0], 1.0) == pytest.approx(0.135335, abs=1e-6)


@pytest.mark.parametrize("fn", [kernel_eval, kernel_grad_x])
def test_dimension_mismatch(fn):
    with pytest.raises(ValueError):
        fn([0.0, 1.0], [0.0], 1.0)


def test_nonpositive_lengthscale():
    with pytest.raises(ValueError):
        kernel_eval([0.0], [1.0], 0.0)


@pytest.mark.invariant
def test_kernel_symmetry_and_range(rng):
    for _ in range(1000):
        d = rng.integers(1, 6)
        x, y = rng.normal(size=d), rng.normal(size=d)
        ell = rng.uniform(0.2, 3.0)
        k = kernel_eval(x, y, ell)
        assert k == kernel_eval(y, x, ell)
        assert 0.0 < k <= 1.0


# kernel_grad_x

def test_kernel_grad_hand_values():
    np.testing.assert_array_equal(kernel_grad_x([0.3, 1.0], [0.3, 1.0]), [0.0, 0.0])
    np.testing.assert_allclose(kernel_grad_x([1.0], [0.0], 1.0), [-np.exp(-0.5)], rtol=1e-14)


@pytest.mark.invariant
def test_kernel_grad_finite_difference(rng):
    for _ in range(50):
        x, y = rng.normal(size=3), rng.normal(size=3)
        ell = rng.uniform(0.5, 2.0)
        fd = central_difference(lambda z: kernel_eval(z, y, ell), x)
        np.testing.assert_allclose(kernel_grad_x(x, y, ell), fd, atol=1e-6)


# median_heuristic

def test_median_hand_values():
    assert median_heuristic(np.array([[0.0], [1.0], [3.0]])) == 2.0
    assert median_heuristic(np.array([[0.0, 0.0], [3.0, 4.0]])) == 5.0
    # six pairs: mean of the two central order statistics
    assert median_heuristic(np.array([0.0, 1.0, 2.0, 4.0])) == 2.0


def test_median_degenerate():
    with pytest.raises(DegeneratePointSetError, match="degenerate point set"):
        median_heuristic(np.ones((4, 2)))
    with pytest.raises(ValueError):
        median_heuristic(np.zeros((1, 2)))


@pytest.mark.invariant
@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_median_permutation_and_translation(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(int(rng.integers(2, 30)), 3))
    med = median_heuristic(X)
    np.testing.assert_allclose(median_heuristic(X[rng.permutation(len(X))]), med, rtol=1e-12)
    np.testing.assert_allclose(median_heuristic(X + rng.normal(size=3) * 10), med, rtol=1e-9)


# feature maps

def test_feature_map_determinism_and_shape():
    a = sample_feature_map(3, 50, 0.7, random_state=4)
    b = sample_feature_map(3, 50, 0.7, random_state=4)
    np.testing.assert_array_equal(a.frequencies, b.frequencies)
    np.testing.assert_array_equal(a.phases, b.phases)
    one = sample_feature_map(4, 1, random_state=0)
    assert one.frequencies.shape == (1, 4) and one.phases.shape == (1,)
    assert np.all((a.phases >= 0) & (a.phases < 2 * np.pi))


def test_feature_map_is_immutable():
    fmap = sample_feature_map(2, 5, random_state=0)
    with pytest.raises(ValueError):
        fmap.frequencies[0, 0] = 1.0


def test_feature_map_frequency_scale(rng):
    fmap = sample_feature_map(2, 20000, lengthscale=0.5, random_state=rng)
    np.testing.assert_allclose(fmap.frequencies.std(axis=0), 2.0, rtol=0.03)


def test_embed_hand_values():
    const = FourierFeatureMap(np.zeros((1, 1)), np.zeros(1))
    np.testing.assert_allclose(embed(const, [3.7]), [np.sqrt(2.0)])
    fmap = FourierFeatureMap(np.array([[1.0], [0.0]]), np.array([0.0, np.pi / 2]))
    np.testing.assert_allclose(embed(fmap, [0.0]), [1.0, 0.0], atol=1e-15)


def test_embed_dimension_mismatch():
    fmap = sample_feature_map(3, 4, random_state=0)
    with pytest.raises(ValueError):
        embed(fmap, [0.0, 1.0])


@given(arrays(float, 2, elements=st.floats(-1e3, 1e3)), st.integers(1, 40), st.integers(0, 100))
def test_embed_bounds(x, m, seed):
    phi = embed(sample_feature_map(2, m, random_state=seed), x)
    assert phi.shape == (m,)
    assert np.all(np.abs(phi) <= np.sqrt(2.0 / m) + 1e-15)
    assert phi @ phi <= 2.0 + 1e-12


def test_embed_batch_matches_rows(rng):
    fmap = sample_feature_map(3, 7, random_state=rng)
    X = rng.normal(size=(5, 3))
    np.testing.assert_allclose(embed(fmap, X), np.stack([embed(fmap, x) for x in X]))
    np.testing.assert_allclose(embed_grad(fmap, X)[2], embed_grad(fmap, X[2]))


def test_zero_frequencies_give_zero_derivatives():
    fmap = FourierFeatureMap(np.zeros((4, 2)), np.arange(4.0))
    np.testing.assert_array_equal(embed_grad(fmap, [1.0, 2.0]), 0.0)
    np.testing.assert_array_equal(embed_hess_diag(fmap, [1.0, 2.0]), 0.0)


@pytest.mark.invariant
def test_embed_derivatives_finite_difference(rng):
    h = 1e-5
    for _ in range(20):
        fmap = sample_feature_map(3, 7, lengthscale=rng.uniform(0.5, 2.0), random_state=rng)
        x = rng.normal(size=3)
        J, H = embed_grad(fmap, x), embed_hess_diag(fmap, x)
        assert J.shape == H.shape == (7, 3)
        for ell in range(3):
            e = np.zeros(3)
            e[ell] = h
            up, mid, down = embed(fmap, x + e), embed(fmap, x), embed(fmap, x - e)
            np.testing.assert_allclose(J[:, ell], (up - down) / (2 * h), atol=1e-6)
            np.testing.assert_allclose(H[:, ell], (up - 2 * mid + down) / h**2, atol=1e-4)


def test_feature_expectation_matches_kernel(rng):
    x, y = rng.normal(size=2), rng.normal(size=2)
    ell = 1.3
    vals = [embed(f, x) @ embed(f, y) for f in (sample_feature_map(2, 2000, ell, rng) for _ in range(50))]
    assert abs(np.mean(vals) - kernel_eval(x, y, ell)) < 0.02


@pytest.mark.invariant
def test_feature_error_rate(rng):
    # RMS error of a single map's kernel estimate halves per 4x features
    x, y = np.array([0.3, -0.2]), np.array([-0.4, 0.5])
    k = kernel_eval(x, y, 1.0)
    errs = []
    for m in (100, 400, 1600):
        est = [embed(f, x) @ embed(f, y) for f in (sample_feature_map(2, m, 1.0, rng) for _ in range(400))]
        errs.append(np.sqrt(np.mean((np.array(est) - k) ** 2)))
    for coarse, fine in zip(errs, errs[1:]):
        assert 1.0 <= coarse / fine <= 4.0


def test_random_fourier_features_transformer(rng):
    X = rng.normal(size=(50, 3))
    rff = RandomFourierFeatures(n_components=64, random_state=0).fit(X)
    assert rff.lengthscale_ == pytest.approx(median_heuristic(X))
    np.testing.assert_allclose(rff.transform(X), embed(rff.feature_map_, X))
    assert rff.fit_transform(X).shape == (50, 64)
    with pytest.raises(ValueError):
        rff.transform(rng.normal(size=(3, 2)))
