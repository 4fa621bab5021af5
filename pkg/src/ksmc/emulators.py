"""Kernel emulators of a weighted particle system.

Two models are fitted to the current particles:

* :class:`KernelCovarianceEmulator` gives a position-dependent Gaussian
  proposal covariance ``gamma2 I + nu2 M C_w M^T`` where the columns of ``M``
  are kernel gradients towards every anchor particle and ``C_w`` is the
  weighted centering matrix ``diag(w) - w w^T``.
* :class:`ScoreMatchingGradientEmulator` fits ``f(x) = theta . phi(x)`` on
  random Fourier features by (weighted, ridge-regularised) score matching and
  exposes ``grad f`` as a surrogate for the log-target gradient.
"""

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_generator, check_points, check_positive, check_weights
from .kernels import (
    DegeneratePointSetError,
    FourierFeatureMap,
    gaussian_gram,
    median_heuristic,
    sample_feature_map,
)

__all__ = [
    "KernelCovarianceEmulator",
    "ScoreMatchingGradientEmulator",
    "SingularSystemError",
    "emulator_log_grad",
    "fit_covariance_emulator",
    "fit_gradient_emulator",
    "proposal_covariance",
    "systematic_indices",
]


class SingularSystemError(np.linalg.LinAlgError):
    pass


def systematic_indices(weights, n, rng):
    """Indices of ``n`` systematic draws from normalized ``weights``."""
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    positions = (rng.uniform() + np.arange(n)) / n
    return np.searchsorted(cdf, positions, side="right").clip(max=len(weights) - 1)


class KernelCovarianceEmulator(BaseEstimator):
    """Locally aligned Gaussian proposal covariances from a weighted particle set.

    Parameters
    ----------
    nu2 : float, default=1.0
        Scale of the emulator term.
    gamma2 : float, default=0.01
        Isotropic exploration noise; keeps every covariance positive definite.
    max_anchors : int, default=500
        Particle systems larger than this are thinned by systematic resampling;
        duplicate draws are merged into one anchor with a larger weight.
    lengthscale : float or "median", default="median"
    gradient_scale : float or "bandwidth", default="bandwidth"
        Prefactor ``s`` in ``M = s [grad_x k(x, z_1), ..., grad_x k(x, z_n)]``.
        ``"bandwidth"`` uses ``s = l^2`` which makes ``nu2`` dimensionless: as
        ``l`` grows the emulator covariance tends to the weighted particle
        covariance. ``2.0`` gives the classical KAMH form.
    random_state : int, Generator or None
        Only used for thinning.
    """

    def __init__(
        self,
        nu2=1.0,
        gamma2=0.01,
        max_anchors=500,
        lengthscale="median",
        gradient_scale="bandwidth",
        random_state=None,
    ):
        self.nu2 = nu2
        self.gamma2 = gamma2
        self.max_anchors = max_anchors
        self.lengthscale = lengthscale
        self.gradient_scale = gradient_scale
        self.random_state = random_state

    def fit(self, X, sample_weight=None):
        X, _ = check_points(X, min_samples=2)
        w = check_weights(sample_weight, X.shape[0])
        check_positive(self.gamma2, "gamma2")
        check_positive(self.nu2, "nu2", strict=False)

        if X.shape[0] <= self.max_anchors:
            keep = w > 0
            anchors, omega = X[keep], w[keep]
        else:
            rng = check_generator(self.random_state)
            idx = systematic_indices(w, int(self.max_anchors), rng)
            uniq, counts = np.unique(idx, return_counts=True)
            anchors, omega = X[uniq], counts.astype(float)
        omega = omega / omega.sum()

        if self.lengthscale == "median":
            try:
                ell = median_heuristic(anchors) if anchors.shape[0] > 1 else None
            except DegeneratePointSetError:
                ell = None
            if ell is None:
                ell = getattr(self, "lengthscale_", 1.0)
        else:
            ell = check_positive(self.lengthscale, "lengthscale")

        self.anchors_ = anchors
        self.anchor_weights_ = omega
        self.lengthscale_ = float(ell)
        self.center_ = omega @ anchors
        self.n_features_in_ = X.shape[1]
        self._zc = anchors - self.center_
        self._zz = np.einsum("jd,je->jde", self._zc, self._zc).reshape(len(anchors), -1)
        return self

    def _prefactor(self):
        ell2 = self.lengthscale_**2
        s = ell2 if self.gradient_scale == "bandwidth" else float(self.gradient_scale)
        return s / ell2

    def emulator_covariance(self, X, chunk_size=4096):
        """``M C_w M^T`` at each row of ``X`` (without ``nu2`` and ``gamma2``)."""
        check_is_fitted(self, "anchors_")
        X, was_vector = check_points(X, dim=self.n_features_in_)
        d = X.shape[1]
        f2 = self._prefactor() ** 2
        out = np.empty((X.shape[0], d, d))
        for start in range(0, X.shape[0], chunk_size):
            xc = X[start : start + chunk_size] - self.center_
            K = gaussian_gram(xc, self._zc, self.lengthscale_)
            a = K * K * self.anchor_weights_          # omega_j k_j^2
            b = K * self.anchor_weights_              # omega_j k_j
            s0, s1 = a.sum(axis=1), a @ self._zc
            s2 = (a @ self._zz).reshape(-1, d, d)
            # sum_j a_j (x - z_j)(x - z_j)^T
            second = (
                s0[:, None, None] * xc[:, :, None] * xc[:, None, :]
                - xc[:, :, None] * s1[:, None, :]
                - s1[:, :, None] * xc[:, None, :]
                + s2
            )
            mean = b.sum(axis=1)[:, None] * xc - b @ self._zc
            block = second - mean[:, :, None] * mean[:, None, :]
            out[start : start + chunk_size] = f2 * 0.5 * (block + block.transpose(0, 2, 1))
        return out[0] if was_vector else out

    def proposal_covariance(self, X):
        """Proposal covariance ``gamma2 I + nu2 M C_w M^T`` at ``X``."""
        G = self.emulator_covariance(X)
        eye = np.eye(G.shape[-1])
        return self.gamma2 * eye + self.nu2 * G


def fit_covariance_emulator(particles, weights=None, **config):
    """Functional form of :meth:`KernelCovarianceEmulator.fit`."""
    return KernelCovarianceEmulator(**config).fit(particles, weights)


def proposal_covariance(emulator, x):
    return emulator.proposal_covariance(x)


def _score_matching_stats(fmap, X, w, chunk_size=2048):
    """Weighted averages ``b`` and ``C`` of the score-matching objective.

    With ``A = X W^T + u`` and ``s = sqrt(2/m)``::

        C = s^2 (sin(A)^T diag(w) sin(A)) * (W W^T)
        b = s (w^T cos(A)) * rowsum(W^2)
    """
    W, u = fmap.frequencies, fmap.phases
    m = W.shape[0]
    s = np.sqrt(2.0 / m)
    SwS = np.zeros((m, m))
    wc = np.zeros(m)
    for start in range(0, X.shape[0], chunk_size):
        A = X[start : start + chunk_size] @ W.T + u
        ws = w[start : start + chunk_size]
        S = np.sin(A)
        SwS += S.T @ (ws[:, None] * S)
        wc += ws @ np.cos(A)
    C = s * s * SwS * (W @ W.T)
    b = s * wc * np.sum(W * W, axis=1)
    return b, 0.5 * (C + C.T)


class ScoreMatchingGradientEmulator(BaseEstimator):
    """Finite-feature exponential family ``f(x) = theta . phi(x)`` fit by score matching.

    ``theta`` solves ``(C + ridge I) theta = b`` where ``b`` and ``C`` are the
    weight-normalized averages over particles of ``-sum_l d^2 phi / dx_l^2``
    and ``sum_l (d phi/dx_l)(d phi/dx_l)^T``. :meth:`partial_fit` adds one
    batch (one SMC/PMC iteration) to running sums; each batch is normalized by
    its own total weight before being averaged with earlier ones.

    Parameters
    ----------
    n_components : int, default=300
    lengthscale : float or "median", default="median"
        Bandwidth of the feature map, chosen on the first batch only.
    ridge : float or "auto", default="auto"
        "auto" uses ``1e-3 * trace(C) / m``.
    feature_map : FourierFeatureMap, optional
        Use this map instead of sampling one.
    random_state : int, Generator or None
    """

    def __init__(
        self,
        n_components=300,
        lengthscale="median",
        ridge="auto",
        feature_map=None,
        random_state=None,
    ):
        self.n_components = n_components
        self.lengthscale = lengthscale
        self.ridge = ridge
        self.feature_map = feature_map
        self.random_state = random_state

    def fit(self, X, sample_weight=None):
        for attr in ("feature_map_", "b_sum_", "C_sum_", "n_batches_"):
            self.__dict__.pop(attr, None)
        return self.partial_fit(X, sample_weight)

    def partial_fit(self, X, sample_weight=None):
        X, _ = check_points(X)
        w = check_weights(sample_weight, X.shape[0])
        if not hasattr(self, "feature_map_"):
            self.feature_map_ = self._make_map(X)
            self.n_features_in_ = X.shape[1]
            m = self.feature_map_.n_features
            self.b_sum_, self.C_sum_, self.n_batches_ = np.zeros(m), np.zeros((m, m)), 0
        elif X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has dimension {X.shape[1]}, expected {self.n_features_in_}")
        b, C = _score_matching_stats(self.feature_map_, X, w)
        self.b_sum_ += b
        self.C_sum_ += C
        self.n_batches_ += 1
        self._solve()
        return self

    def _make_map(self, X):
        if self.feature_map is not None:
            if not isinstance(self.feature_map, FourierFeatureMap):
                raise TypeError("feature_map must be a FourierFeatureMap")
            if self.feature_map.dim != X.shape[1]:
                raise ValueError("feature_map dimension does not match X")
            return self.feature_map
        if self.lengthscale == "median":
            try:
                ell = median_heuristic(X) if X.shape[0] > 1 else 1.0
            except DegeneratePointSetError:
                ell = 1.0
        else:
            ell = check_positive(self.lengthscale, "lengthscale")
        return sample_feature_map(X.shape[1], self.n_components, ell, self.random_state)

    def _solve(self):
        b = self.b_sum_ / self.n_batches_
        C = self.C_sum_ / self.n_batches_
        m = len(b)
        if self.ridge == "auto":
            lam = 1e-3 * np.trace(C) / m
        else:
            lam = check_positive(self.ridge, "ridge", strict=False)
        if lam == 0:
            eig = np.linalg.eigvalsh(C)
            if eig[0] <= max(eig[-1], 1.0) * m * np.finfo(float).eps:
                raise SingularSystemError("singular system; increase ridge")
        try:
            factor = scipy.linalg.cho_factor(C + lam * np.eye(m), lower=True)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError("singular system; increase ridge") from exc
        theta = scipy.linalg.cho_solve(factor, b)
        if not np.all(np.isfinite(theta)):
            raise SingularSystemError("singular system; increase ridge")
        self.ridge_ = lam
        self.coef_ = theta

    def score_samples(self, X):
        """Unnormalized log-density ``f(x) = theta . phi(x)``."""
        check_is_fitted(self, "coef_")
        X, was_vector = check_points(X, dim=self.n_features_in_)
        fmap = self.feature_map_
        out = np.sqrt(2.0 / fmap.n_features) * np.cos(X @ fmap.frequencies.T + fmap.phases) @ self.coef_
        return out[0] if was_vector else out

    def gradient(self, X):
        """``grad f`` at each row of ``X``."""
        check_is_fitted(self, "coef_")
        X, was_vector = check_points(X, dim=self.n_features_in_)
        fmap = self.feature_map_
        S = np.sin(X @ fmap.frequencies.T + fmap.phases)
        out = -np.sqrt(2.0 / fmap.n_features) * (S * self.coef_) @ fmap.frequencies
        return out[0] if was_vector else out


def fit_gradient_emulator(particles, weights, feature_map, ridge="auto"):
    """Fit a :class:`ScoreMatchingGradientEmulator` on a fixed feature map."""
    return ScoreMatchingGradientEmulator(feature_map=feature_map, ridge=ridge).fit(particles, weights)


def emulator_log_grad(emulator, x):
    return emulator.gradient(x)
