import numpy as np
import pytest
from numpy.testing import assert_allclose

from macroenergy.exceptions import DataError, NumericalError
from macroenergy.gpr import (
    GprModel,
    _chol,
    fit_gpr,
    fit_residual_gprs,
    hybrid_forecast,
    log_marginal_likelihood,
    predict,
    rbf_kernel,
    residual_features,
    residual_query,
)

X5 = np.array([[0.0], [0.7], [1.5], [2.2], [3.1]])
Y5 = np.sin(X5[:, 0]) + np.array([0.05, -0.02, 0.03, 0.0, -0.04])


def _dense(X, y, xs, ell, sn, sf):
    """Posterior by explicit inverse; the reference for the Cholesky path."""
    K = sf**2 * np.exp(-0.5 * ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1) / ell**2)
    Ks = sf**2 * np.exp(-0.5 * ((xs[:, None, :] - X[None, :, :]) ** 2).sum(-1) / ell**2)
    A = np.linalg.inv(K + sn**2 * np.eye(len(y)))
    mean = Ks @ A @ y
    var = sf**2 - np.einsum("ij,jk,ik->i", Ks, A, Ks)
    lml = -0.5 * y @ A @ y - 0.5 * np.linalg.slogdet(K + sn**2 * np.eye(len(y)))[1] - 0.5 * len(y) * np.log(2 * np.pi)
    return mean, var, lml


class TestKernel:
    def test_values(self):
        A = np.array([[0.0, 0.0], [1.0, 1.0]])
        K = rbf_kernel(A, A, 2.0, 1.5)
        assert_allclose(np.diag(K), 2.25)
        assert_allclose(K[0, 1], 2.25 * np.exp(-2 / 8))

    def test_psd(self):
        X = np.random.default_rng(0).standard_normal((40, 3))
        assert np.linalg.eigvalsh(rbf_kernel(X, X, 0.8, 1.0))[0] > -1e-10


class TestPosterior:
    @pytest.mark.parametrize("ell,sn,sf", [(0.8, 0.1, 1.0), (2.0, 0.3, 0.5), (0.3, 1e-3, 2.0)])
    def test_dense_oracle(self, ell, sn, sf):
        xs = np.linspace(-1, 4, 11)[:, None]
        m = fit_gpr(X5, Y5, optimize_hyper=False, length_scale=ell, noise_sd=sn, signal_sd=sf)
        mean, var = predict(m, xs)
        dm, dv, dl = _dense(X5, Y5, xs, ell, sn, sf)
        assert_allclose(mean, dm, atol=1e-8)
        assert_allclose(var, dv, atol=1e-8)
        assert_allclose(m.log_ml, dl, atol=1e-8)
        assert_allclose(log_marginal_likelihood(X5, Y5, ell, sn, sf), dl, atol=1e-8)

    def test_exact_interpolation(self):
        m = fit_gpr(X5, Y5, optimize_hyper=False, length_scale=1.0, noise_sd=1e-6, signal_sd=1.0)
        mean, var = predict(m, X5)
        assert_allclose(mean, Y5, atol=1e-6)
        assert np.all(var < 1e-6)

    def test_prior_reversion(self):
        m = fit_gpr(X5, Y5, optimize_hyper=False, length_scale=0.5, noise_sd=0.1, signal_sd=1.3)
        mean, var = predict(m, np.array([50.0]))
        assert abs(mean) < 1e-12
        assert_allclose(var, 1.3**2)

    def test_single_query_scalars(self):
        m = fit_gpr(X5, Y5, optimize_hyper=False)
        mean, var = predict(m, np.array([1.0]))
        assert isinstance(mean, float) and isinstance(var, float) and var >= 0

    def test_standardize_round_trip(self):
        y = 100 + 20 * Y5
        m = fit_gpr(X5 * 3 + 1, y, optimize_hyper=False, standardize=True, length_scale=0.5, noise_sd=1e-4)
        assert_allclose(predict(m, X5 * 3 + 1)[0], y, rtol=1e-5)

    def test_jitter_escalation(self):
        Q = np.linalg.qr(np.random.default_rng(0).standard_normal((6, 6)))[0]
        K = Q @ np.diag([-5e-9, 1, 2, 3, 4, 5]) @ Q.T
        L, jit = _chol(K, 0.0)
        assert jit == 1e-8
        assert_allclose(L @ L.T, K + jit * np.eye(6), atol=1e-12)
        with pytest.raises(NumericalError):
            _chol(K - 1e-3 * np.eye(6), 0.0)

    def test_duplicate_inputs(self):
        X = np.vstack([X5, X5])
        m = fit_gpr(X, np.concatenate([Y5, Y5]), optimize_hyper=False, noise_sd=0.0)
        assert np.all(np.isfinite(predict(m, X5)[0]))


class TestHyper:
    def test_gradient_matches_finite_difference(self):
        X = np.random.default_rng(1).uniform(-2, 2, (30, 2))
        y = np.sin(X[:, 0]) * np.cos(X[:, 1])
        theta = np.array([0.9, 0.15, 1.1])
        _, g = log_marginal_likelihood(X, y, *theta, grad=True)
        h = 1e-6
        fd = []
        for i in range(3):
            up, dn = np.log(theta), np.log(theta)
            up[i] += h
            dn[i] -= h
            fd.append((log_marginal_likelihood(X, y, *np.exp(up)) - log_marginal_likelihood(X, y, *np.exp(dn))) / (2 * h))
        assert_allclose(g, fd, rtol=1e-5, atol=1e-7)

    def test_optimum_is_stationary(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(-3, 3, (60, 1))
        y = np.sin(X[:, 0]) + rng.normal(0, 0.1, 60)
        m = fit_gpr(X, y, seed=0)
        _, g = log_marginal_likelihood(X, y, m.length_scale, m.noise_sd, m.signal_sd, grad=True)
        assert np.linalg.norm(g) < 1e-2
        assert 0.03 < m.noise_sd < 0.3

    def test_optimized_beats_default(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(-3, 3, (40, 1))
        y = np.sin(2 * X[:, 0]) + rng.normal(0, 0.05, 40)
        assert fit_gpr(X, y).log_ml >= fit_gpr(X, y, optimize_hyper=False).log_ml

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        X, y = rng.standard_normal((25, 2)), rng.standard_normal(25)
        a, b = fit_gpr(X, y, seed=5), fit_gpr(X, y, seed=5)
        assert (a.length_scale, a.noise_sd, a.signal_sd) == (b.length_scale, b.noise_sd, b.signal_sd)

    @pytest.mark.parametrize(
        "X,y",
        [(np.ones((3, 1)), np.ones(4)), (np.empty((0, 1)), np.empty(0)), (np.array([[np.nan]]), np.ones(1))],
    )
    def test_invalid(self, X, y):
        with pytest.raises(DataError):
            fit_gpr(X, y, optimize_hyper=False)

    def test_query_dimension(self):
        m = fit_gpr(X5, Y5, optimize_hyper=False)
        with pytest.raises(DataError):
            predict(m, np.ones(2))


class TestResidualHybrid:
    e = np.arange(24, dtype=float).reshape(8, 3)

    def test_features_layout(self):
        X, y = residual_features(self.e, k=1, d=2)
        # row for t = 2: own lags eps_{1,1}, eps_{1,0}; others eps_{0,1}, eps_{2,1}
        assert_allclose(X[0], [4, 1, 3, 5])
        assert_allclose(y, self.e[2:, 1])
        assert X.shape == (6, 4)

    def test_query_matches_next_feature_row(self):
        X, _ = residual_features(self.e, k=2, d=3)
        assert_allclose(residual_query(self.e[:-1], 2, 3), X[-1])

    def test_too_short(self):
        with pytest.raises(DataError):
            residual_features(self.e[:2], 0, d=3)

    def test_hybrid_adds_correction(self):
        rng = np.random.default_rng(6)
        e = rng.standard_normal((80, 2))
        e[1:, 0] += 0.8 * e[:-1, 0]
        models = fit_residual_gprs(e, d=2, seed=1)
        base = np.array([0.1, -0.2])
        fc = hybrid_forecast(base, e, models)
        assert_allclose(fc.combined, base + fc.correction)
        expected = [predict(m, residual_query(e, k, 2))[0] for k, m in enumerate(models)]
        assert_allclose(fc.correction, expected)
        # the learned correction tracks the AR(1) residual signal
        assert np.sign(fc.correction[0]) == np.sign(e[-1, 0])

    def test_hybrid_single_model(self):
        m = fit_gpr(X5, Y5, optimize_hyper=False)
        assert isinstance(m, GprModel)
        fc = hybrid_forecast(np.array(1.0), np.array([0.7, 9.0]), m)
        assert_allclose(fc.combined, 1.0 + predict(m, np.array([0.7]))[0])
