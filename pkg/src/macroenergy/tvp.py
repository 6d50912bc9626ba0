"""Time-varying-parameter VAR via a forward Kalman filter.

Coefficients follow independent random walks. The state covariance is kept
in the matrix-normal form ``Sigma_t (x) P_t``: every equation shares one
``m x m`` factor ``P_t`` (``m = 1 + K p``), so the filter costs the same as
recursive least squares and reduces to it exactly when ``kappa = 0``. The
residual covariance ``Sigma_t`` is an exponentially weighted average of
scaled one-step prediction errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DataError, NumericalError
from .var import IrfResult, SvarFactorization, VarModel, impulse_response, lag_matrix

__all__ = ["TvpConfig", "TvpModel", "RegimeIrfSet", "fit_tvp", "tvp_residuals", "regime_irfs"]


@dataclass(frozen=True)
class TvpConfig:
    """Drift-law hyperparameters.

    Parameters
    ----------
    kappa : float
        Random-walk variance as a multiple of the prior-window OLS
        coefficient variance.
    ewma_lambda : float
        Decay of the residual covariance average.
    prior_window : int
        Number of initial usable rows fitted by OLS to start the filter.
    """

    kappa: float = 1e-3
    ewma_lambda: float = 0.96
    prior_window: int = 60

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ConfigError("kappa must be non-negative")
        if not 0 < self.ewma_lambda < 1:
            raise ConfigError("ewma_lambda must lie in (0, 1)")
        if int(self.prior_window) != self.prior_window or self.prior_window < 1:
            raise ConfigError("prior_window must be a positive integer")


@dataclass(frozen=True)
class TvpModel:
    """Filtered TVP-VAR.

    Attributes
    ----------
    coef_path : ndarray, shape (n, 1 + K p, K)
        Filtered coefficients ``B_{t|t}``; row 0 is the intercept, column
        ``k`` is equation ``k``.
    P_path : ndarray, shape (n, m, m)
        Shared state-covariance factor after the update at ``t``.
    sigma_path : ndarray, shape (n, K, K)
        Residual covariance available before observing ``y_t``.
    impact_path : ndarray, shape (n, K, K)
        Lower Cholesky factor of ``sigma_path``.
    residuals : ndarray, shape (n, K)
        One-step-ahead prediction errors ``y_t - B_{t-1}' x_t``.
    std_innovations : ndarray, shape (n, K)
        Residuals whitened by the Cholesky factor of their predictive covariance.
    """

    p: int
    config: TvpConfig
    names: tuple
    dates: np.ndarray
    coef_path: np.ndarray
    P_path: np.ndarray
    sigma_path: np.ndarray
    impact_path: np.ndarray
    residuals: np.ndarray
    std_innovations: np.ndarray
    prior_coef: np.ndarray

    @property
    def K(self) -> int:
        return self.residuals.shape[1]

    @property
    def coeff_path(self) -> np.ndarray:
        """Stacked coefficient vectors, equation by equation, shape (n, m K)."""
        return np.transpose(self.coef_path, (0, 2, 1)).reshape(self.coef_path.shape[0], -1)

    @property
    def coeff_cov_path(self) -> np.ndarray:
        """State covariance ``Sigma_t (x) P_t`` matching :attr:`coeff_path`."""
        return np.stack([np.kron(S, P) for S, P in zip(self.sigma_path, self.P_path)])

    def var_at(self, t: int) -> VarModel:
        """Freeze the coefficients and covariance at filter step ``t``."""
        B = self.coef_path[t]
        K, p = self.K, self.p
        A = np.stack([B[1 + i * K : 1 + (i + 1) * K].T for i in range(p)])
        return VarModel(
            p,
            B[0].copy(),
            A,
            self.sigma_path[t].copy(),
            self.residuals,
            np.full_like(B, np.nan),
            self.names,
        )


@dataclass(frozen=True)
class RegimeIrfSet:
    regimes: tuple
    dates: tuple
    indices: tuple
    irfs: tuple

    def __getitem__(self, regime: str) -> IrfResult:
        return self.irfs[self.regimes.index(regime)]


def fit_tvp(panel, p: int = 1, config: TvpConfig | None = None) -> TvpModel:
    """Run the Kalman filter over ``panel``.

    The first ``prior_window`` usable rows give the OLS prior; filtering
    starts on the next row. Observations after ``t`` never influence the
    output at ``t``.
    """
    config = config or TvpConfig()
    y = np.asarray(getattr(panel, "values", panel), dtype=float)
    T, K = y.shape
    names = tuple(getattr(panel, "names", None) or (f"y{i}" for i in range(K)))
    dates = getattr(panel, "dates", None)
    m = 1 + K * p
    w = int(config.prior_window)
    if w < K * p + 5:
        raise DataError(f"prior_window must be at least K*p+5 = {K * p + 5}")
    if T - p <= w + 10:
        raise DataError(f"need more than {w + 10 + p} observations for prior_window={w}")

    Y, X = lag_matrix(y, p)
    X0, Y0 = X[:w], Y[:w]
    try:
        XtX_inv = np.linalg.inv(X0.T @ X0)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular design on the prior window") from exc
    if not np.all(np.isfinite(XtX_inv)) or np.linalg.matrix_rank(X0) < m:
        raise NumericalError("singular design on the prior window")
    B = XtX_inv @ X0.T @ Y0
    E0 = Y0 - X0 @ B
    Sigma = E0.T @ E0 / max(w - m, 1)
    P = XtX_inv.copy()
    Q = config.kappa * np.diag(np.diag(XtX_inv))
    lam = config.ewma_lambda
    prior = B.copy()

    X, Y = X[w:], Y[w:]
    n = Y.shape[0]
    coef = np.empty((n, m, K))
    Ps = np.empty((n, m, m))
    sig = np.empty((n, K, K))
    imp = np.empty((n, K, K))
    res = np.empty((n, K))
    eta = np.empty((n, K))
    for t in range(n):
        x = X[t]
        P = P + Q
        e = Y[t] - x @ B
        Px = P @ x
        f = 1.0 + x @ Px
        try:
            L = np.linalg.cholesky(Sigma)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"residual covariance lost positive definiteness at step {t}") from exc
        sig[t] = Sigma
        imp[t] = L
        res[t] = e
        eta[t] = np.linalg.solve(L, e) / np.sqrt(f)
        B = B + np.outer(Px / f, e)
        P = P - np.outer(Px, Px) / f
        P = (P + P.T) / 2
        if np.min(np.diag(P)) < 0 or np.linalg.eigvalsh(P)[0] < -1e-10 * max(1.0, np.abs(P).max()):
            raise NumericalError(f"state covariance lost positive semidefiniteness at step {t}")
        coef[t] = B
        Ps[t] = P
        Sigma = lam * Sigma + (1 - lam) * np.outer(e, e) / f

    out_dates = np.asarray(dates)[p + w :] if dates is not None else np.arange(p + w, T)
    return TvpModel(p, config, names, out_dates, coef, Ps, sig, imp, res, eta, prior)


def tvp_residuals(model: TvpModel) -> np.ndarray:
    """One-step-ahead prediction errors, aligned with ``model.dates``."""
    return model.residuals.copy()


def regime_irfs(model: TvpModel, H: int, ordering=None) -> RegimeIrfSet:
    """IRFs at the medians of an equal-thirds split of the filtered sample.

    ``ordering`` permutes the variables before the Cholesky factorization of
    the frozen ``Sigma_t``.
    """
    n = model.residuals.shape[0]
    edges = np.linspace(0, n, 4).round().astype(int)
    idx = tuple(int((edges[i] + edges[i + 1] - 1) // 2) for i in range(3))
    irfs = []
    for t in idx:
        frozen = model.var_at(t)
        order = list(range(model.K)) if ordering is None else [
            model.names.index(o) if isinstance(o, str) else int(o) for o in ordering
        ]
        S = frozen.Sigma[np.ix_(order, order)]
        try:
            Pc = np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"Sigma_t not positive definite at step {t}") from exc
        fact = SvarFactorization(Pc, tuple(order), tuple(model.names[i] for i in order))
        irfs.append(impulse_response(frozen, fact, H))
    dates = tuple(str(model.dates[t]) for t in idx)
    return RegimeIrfSet(("early", "mid", "late"), dates, idx, tuple(irfs))
