"""VAR estimation, lag selection, identification, IRFs and forecasts.

Reference numbers for the seeded VAR(2) were frozen from statsmodels 0.14
``VAR(y).fit(2)``: ``params``, ``sigma_u``, ``stderr``, ``orth_ma_rep`` and
``forecast``.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from conftest import simulate_var1
from macroenergy.exceptions import DataError, NumericalError
from macroenergy.var import (
    VarModel,
    cholesky_identify,
    fit_var,
    forecast,
    impulse_response,
    lag_matrix,
    select_lag,
    structural_shocks,
)

SM_PARAMS_T = np.array(
    [
        [0.03591376444820849, 0.5660117494402301, -0.14246906198418474, 0.06120394778033689,
         0.02743790020038992, 0.0977538239553204, 0.01485480972406918],
        [-0.03109918858995069, -0.0298512173393583, 0.3478477289998486, 0.22317504890799175,
         0.03337993157095425, -0.01879604503775171, -0.01134413246320247],
        [0.16742129085815594, -0.12987767359119862, -0.25997999298237273, 0.3869631608119139,
         0.14734703427299525, -0.2197280739628705, 0.10264424537927697],
    ]
)
SM_SIGMA = np.array(
    [
        [1.077388838217881, -0.02539871403529728, -0.15857814695132993],
        [-0.02539871403529728, 0.24855291664863238, -0.11668108138126794],
        [-0.15857814695132993, -0.11668108138126794, 3.4960882291316633],
    ]
)
SM_STDERR_T = np.array(
    [
        [0.06153876030701148, 0.05877892124137411, 0.12269785715958598, 0.0327803373510202,
         0.05841512580441076, 0.09190545129006725, 0.04412356757783116],
        [0.0295577886261909, 0.02823220554103538, 0.05893322044052286, 0.01574478065016027,
         0.02805747032415273, 0.04414326660585948, 0.02119306722125159],
        [0.11085459491621442, 0.10588308037596592, 0.22102527227809185, 0.05904979236070459,
         0.10522774712590134, 0.16555649679201426, 0.07948324252384055],
    ]
)
SM_ORTH_IRF_H3 = np.array(
    [
        [0.21290787344215914, -0.02625649175560643, 0.07869725275134741],
        [-0.00122733858865083, -0.05950627423767912, 0.15944179739305087],
        [0.05465349572948869, -0.1471173055548349, 0.05035233590462001],
    ]
)
SM_FORECAST = np.array(
    [
        [-0.22773165222784342, 1.1980004875558765, 1.7773595734606993],
        [-0.03962555225227925, 0.7013809038853963, 0.772571351141984],
        [0.09810756214470603, 0.3361941455156122, 0.17482522380239873],
    ]
)


def _ref_data():
    rng = np.random.default_rng(11)
    A = np.array([[0.5, 0.1, 0.0], [0.0, 0.3, 0.2], [0.1, 0.0, 0.4]])
    y = np.zeros((300, 3))
    for t in range(1, 300):
        y[t] = 0.01 + A @ y[t - 1] + rng.standard_normal(3) * [1, 0.5, 2]
    return y


def _model(A, c=None, Sigma=None):
    A = np.asarray(A, dtype=float)
    if A.ndim == 2:
        A = A[None]
    p, K = A.shape[0], A.shape[1]
    c = np.zeros(K) if c is None else np.asarray(c, dtype=float)
    Sigma = np.eye(K) if Sigma is None else np.asarray(Sigma, dtype=float)
    return VarModel(p, c, A, Sigma, np.zeros((10, K)), np.ones((1 + K * p, K)), tuple(f"y{i}" for i in range(K)))


def _random_stable(K, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(0, 0.4, (K, K))
    return 0.8 * A / max(1.0, np.max(np.abs(np.linalg.eigvals(A))))


class TestFit:
    def test_matches_reference(self):
        m = fit_var(_ref_data(), 2)
        assert_allclose(m.coef.T, SM_PARAMS_T, rtol=1e-10, atol=1e-14)
        assert_allclose(m.Sigma, SM_SIGMA, rtol=1e-10)
        assert_allclose(m.stderr.T, SM_STDERR_T, rtol=1e-10)
        assert_allclose(m.residuals.mean(axis=0), 0, atol=1e-8)
        assert m.residuals.shape == (298, 3)

    def test_recovery(self):
        y = simulate_var1(np.diag([0.5, 0.3]), 2000, seed=3)
        m = fit_var(y, 1)
        assert np.max(np.abs(m.A[0] - np.diag([0.5, 0.3]))) < 0.05

    def test_noise_insignificant(self):
        y = np.random.default_rng(4).standard_normal((500, 3))
        m = fit_var(y, 1)
        assert np.all(np.abs(m.coef[1:]) < 3 * m.stderr[1:])

    def test_underdetermined(self):
        K, p = 3, 2
        with pytest.raises(DataError):
            fit_var(np.random.default_rng(0).standard_normal((K * p + p, K)), p)

    def test_collinear(self):
        x = np.random.default_rng(0).standard_normal((100, 1))
        with pytest.raises(NumericalError):
            fit_var(np.hstack([x, 2 * x]), 1)

    def test_lag_matrix_layout(self):
        y = np.arange(12.0).reshape(6, 2)
        Y, Z = lag_matrix(y, 2)
        assert_array_equal(Y, y[2:])
        assert_array_equal(Z[0], [1, 2, 3, 0, 1])


class TestSelectLag:
    def test_hand_formula(self):
        y = _ref_data()
        tab = select_lag(y, 4)
        n = 300 - 4
        for j, p in enumerate(range(1, 5)):
            Y, Z = lag_matrix(y, p, start=4)
            E = Y - Z @ np.linalg.solve(Z.T @ Z, Z.T @ Y)
            ld = np.log(np.linalg.det(E.T @ E / n))
            assert_allclose(tab.aic[j], ld + 2 * p * 9 / n, rtol=1e-12)
            assert_allclose(tab.hq[j], ld + 2 * np.log(np.log(n)) * p * 9 / n, rtol=1e-12)
            assert_allclose(tab.sc[j], ld + np.log(n) * p * 9 / n, rtol=1e-12)
            assert_allclose(tab.fpe[j], ((n + 3 * p) / (n - 3 * p)) ** 3 * np.exp(ld), rtol=1e-10)
        assert tab.nobs == n

    def test_var2_chosen(self):
        rng = np.random.default_rng(5)
        A1, A2 = 0.2 * np.eye(2), -0.5 * np.eye(2)
        y = np.zeros((2100, 2))
        for t in range(2, 2100):
            y[t] = A1 @ y[t - 1] + A2 @ y[t - 2] + rng.standard_normal(2)
        assert select_lag(y[100:], 6).chosen["aic"] == 2

    def test_white_noise(self):
        tab = select_lag(np.random.default_rng(6).standard_normal((400, 2)), 6)
        assert tab.chosen["sc"] == 1
        assert np.all(np.isfinite(tab.aic))

    def test_true_order_beats_neighbours(self):
        wins = 0
        A1, A2 = 0.3 * np.eye(2), 0.25 * np.eye(2)
        for s in range(200):
            rng = np.random.default_rng(1000 + s)
            e = rng.standard_normal((2050, 2))
            y = np.zeros((2050, 2))
            for t in range(2, 2050):
                y[t] = A1 @ y[t - 1] + A2 @ y[t - 2] + e[t]
            aic = select_lag(y[50:], 3).aic
            wins += aic[1] < aic[0] and aic[1] < aic[2]
        assert wins >= 160

    def test_infeasible(self):
        with pytest.raises(DataError):
            select_lag(np.random.default_rng(0).standard_normal((20, 3)), 12)


class TestCholesky:
    def test_identity(self):
        assert_array_equal(cholesky_identify(_model(np.zeros((1, 2, 2)))).impact, np.eye(2))

    def test_hand_factor(self):
        f = cholesky_identify(_model(np.zeros((1, 2, 2)), Sigma=[[4, 2], [2, 3]]))
        assert_allclose(f.impact, [[2, 0], [1, np.sqrt(2)]], rtol=1e-15)

    def test_singular(self):
        with pytest.raises(NumericalError):
            cholesky_identify(_model(np.zeros((1, 2, 2)), Sigma=[[1, 1], [1, 1]]))

    def test_shocks_unit_covariance(self):
        m = fit_var(_ref_data(), 1)
        f = cholesky_identify(m, ["y2", "y0", "y1"])
        u = structural_shocks(m, f)
        dof = m.residuals.shape[0] - 1 - m.K * m.p
        assert_allclose(u.T @ u / dof, np.eye(3), atol=1e-8)
        assert_allclose(u @ f.impact.T, m.residuals[:, [2, 0, 1]], atol=1e-10)
        assert_allclose(f.impact @ f.impact.T, m.Sigma[np.ix_([2, 0, 1], [2, 0, 1])], atol=1e-10)


class TestIrf:
    def test_matches_reference(self):
        m = fit_var(_ref_data(), 2)
        irf = impulse_response(m, cholesky_identify(m), 5)
        assert_allclose(irf.responses[3], SM_ORTH_IRF_H3, rtol=1e-9, atol=1e-14)

    def test_ar1(self):
        m = _model([[[0.5]]])
        irf = impulse_response(m, cholesky_identify(m), 12)
        assert_allclose(irf.responses[:, 0, 0], 0.5 ** np.arange(13), rtol=1e-15)

    def test_diagonal_decoupled(self):
        m = _model(np.diag([0.5, -0.3, 0.8])[None])
        irf = impulse_response(m, cholesky_identify(m), 10)
        off = irf.responses * (1 - np.eye(3))
        assert np.all(off == 0)

    def test_counterfactual_simulation(self):
        A = _random_stable(3, 8)
        Sigma = np.array([[1.0, 0.3, 0.1], [0.3, 2.0, -0.4], [0.1, -0.4, 0.5]])
        m = _model(A[None], c=[0.1, -0.2, 0.05], Sigma=Sigma)
        f = cholesky_identify(m)
        irf = impulse_response(m, f, 10)
        base_shocks = np.random.default_rng(9).standard_normal((11, 3))
        for j in range(3):
            paths = []
            for bump in (0.0, 1.0):
                y = np.full(3, 0.3)
                path = []
                for h in range(11):
                    eps = base_shocks[h].copy()
                    if h == 0:
                        eps = eps + bump * f.impact[:, j]
                    y = m.c + A @ y + eps
                    path.append(y)
                paths.append(np.array(path))
            assert_allclose(paths[1] - paths[0], irf.responses[:, :, j], atol=1e-8)

    def test_horizon_zero_is_impact(self):
        m = fit_var(_ref_data(), 1)
        f = cholesky_identify(m)
        assert np.array_equal(impulse_response(m, f, 0).responses[0], f.impact)

    def test_decay(self):
        m = fit_var(_ref_data(), 2)
        assert m.is_stable()
        irf = impulse_response(m, cholesky_identify(m), 120)
        assert np.abs(irf.responses[-1]).max() < 1e-6 * np.abs(irf.responses[0]).max()


class TestForecast:
    def test_matches_reference(self):
        y = _ref_data()
        assert_allclose(forecast(fit_var(y, 2), y[-2:], 3), SM_FORECAST, rtol=1e-10)

    def test_zero_coefficients(self):
        m = _model(np.zeros((2, 2, 2)), c=[1.5, -2.0])
        assert_array_equal(forecast(m, np.ones((2, 2)), 4), np.tile([1.5, -2.0], (4, 1)))

    def test_geometric(self):
        assert_allclose(forecast(_model([[[0.5]]]), [[2.0]], 3)[:, 0], [1, 0.5, 0.25])

    def test_matrix_power(self):
        A = _random_stable(3, 10)
        c = np.array([0.2, -0.1, 0.3])
        y0 = np.array([1.0, -2.0, 0.5])
        f = forecast(_model(A[None], c=c), y0[None], 3)
        I = np.eye(3)
        closed = np.linalg.matrix_power(A, 3) @ y0 + (I + A + A @ A) @ c
        assert_allclose(f[2], closed, rtol=1e-12)

    def test_short_history(self):
        with pytest.raises(DataError):
            forecast(_model(np.zeros((2, 2, 2))), np.ones((1, 2)), 1)
