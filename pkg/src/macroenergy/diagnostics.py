"""Hypothesis tests and stability diagnostics applied to levels, returns and residuals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from statsmodels.tsa.adfvalues import mackinnoncrit, mackinnonp
from statsmodels.tsa.coint_tables import c_sjt

from .exceptions import DataError, NumericalError

__all__ = [
    "TestReport",
    "CusumPath",
    "adf_test",
    "johansen_trace",
    "jarque_bera",
    "arch_lm",
    "portmanteau",
    "multivariate_arch_q",
    "cusum",
    "welch_t_test",
]

# 5% band constant for the recursive-residual CUSUM (Brown, Durbin and Evans).
CUSUM_A_5PCT = 0.948


@dataclass(frozen=True)
class TestReport:
    name: str
    statistic: float
    df: float
    p_value: float
    reject_at_5pct: bool
    details: dict = field(default_factory=dict, compare=False)

    __test__ = False  # keep pytest from collecting this as a test class

    def row(self) -> tuple:
        return (self.name, self.statistic, self.df, self.p_value, self.reject_at_5pct)


@dataclass(frozen=True)
class CusumPath:
    t: np.ndarray
    statistic_path: np.ndarray
    upper_band: np.ndarray
    lower_band: np.ndarray
    crossed: bool
    sigma: float


def _report(name, statistic, df, p, reject=None, **details) -> TestReport:
    p = float(min(max(p, 0.0), 1.0))
    if reject is None:
        reject = p < 0.05
    return TestReport(name, float(statistic), float(df), p, bool(reject), details)


def _ols(y, X):
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise NumericalError("singular regression design")
    resid = y - X @ beta
    return beta, resid


# -- unit root and cointegration ---------------------------------------------------


def _adf_design(x, dx, lag, start, trend):
    n = len(dx) - start
    cols = [x[start:-1]]
    cols += [dx[start - i : len(dx) - i] for i in range(1, lag + 1)]
    det = [np.ones(n)]
    if trend == "ct":
        det.append(np.arange(1, n + 1, dtype=float))
    return dx[start:], np.column_stack(cols + det)


def adf_test(series, trend: str = "c", max_lag: int = 12) -> TestReport:
    """Augmented Dickey-Fuller test with AIC lag selection.

    Lags ``0..max_lag`` are compared on a common sample; the chosen lag
    is then re-estimated on its full usable sample. The p-value uses
    MacKinnon's response surface.
    """
    if trend not in ("c", "ct"):
        raise ValueError("trend must be 'c' or 'ct'")
    x = np.asarray(series, dtype=float).ravel()
    if len(x) < max_lag + 10:
        raise DataError(f"ADF needs at least max_lag + 10 = {max_lag + 10} observations")
    if np.ptp(x) == 0:
        raise NumericalError("series is constant; ADF regression is singular")
    dx = np.diff(x)

    aics = []
    for lag in range(max_lag + 1):
        y, X = _adf_design(x, dx, lag, max_lag, trend)
        _, e = _ols(y, X)
        n = len(y)
        aics.append(n * np.log(e @ e / n) + 2 * X.shape[1])
    best = int(np.argmin(aics))

    y, X = _adf_design(x, dx, best, best, trend)
    beta, e = _ols(y, X)
    n, k = X.shape
    s2 = e @ e / (n - k)
    se = np.sqrt(s2 * np.linalg.inv(X.T @ X)[0, 0])
    stat = beta[0] / se
    p = mackinnonp(stat, regression=trend, N=1)
    crit = mackinnoncrit(N=1, regression=trend, nobs=n)
    return _report(
        "adf",
        stat,
        np.nan,
        p,
        lags=best,
        nobs=n,
        trend=trend,
        crit_1pct=crit[0],
        crit_5pct=crit[1],
        crit_10pct=crit[2],
    )


def _table_p_value(stat, cv90, cv95, cv99):
    # log-linear interpolation through (0, 1), (cv90, .10), (cv95, .05), (cv99, .01)
    xs = np.array([0.0, cv90, cv95, cv99])
    logp = np.log([1.0, 0.10, 0.05, 0.01])
    if stat <= cv99:
        return float(np.exp(np.interp(stat, xs, logp)))
    slope = (logp[3] - logp[2]) / (xs[3] - xs[2])
    return float(np.exp(logp[3] + slope * (stat - cv99)))


def johansen_trace(levels, lag: int = 1):
    """Johansen trace test with an unrestricted intercept.

    Parameters
    ----------
    levels : array_like or TimeSeriesPanel
        T x K matrix of levels (K <= 12).
    lag : int
        Number of lagged differences in the VECM.

    Returns
    -------
    list of TestReport
        One report per null rank ``r0 = 0..K-1``. Critical values are the
        tabulated 5% quantiles; the p-value is interpolated between the
        tabulated 90/95/99% points and is approximate.
    """
    y = np.asarray(getattr(levels, "values", levels), dtype=float)
    T, K = y.shape
    if K > 12:
        raise DataError("critical values are tabulated for at most 12 variables")
    if T <= K * lag + 10:
        raise DataError("not enough observations for the requested lag")

    dy = np.diff(y, axis=0)
    dep = dy[lag:]
    lagged_level = y[lag:-1]
    n = len(dep)
    Z = np.column_stack([np.ones(n)] + [dy[lag - i : len(dy) - i] for i in range(1, lag + 1)])

    def resid(a):
        beta, *_ = np.linalg.lstsq(Z, a, rcond=None)
        return a - Z @ beta

    r0 = resid(dep)
    r1 = resid(lagged_level)
    s00 = r0.T @ r0 / n
    s11 = r1.T @ r1 / n
    s01 = r0.T @ r1 / n
    try:
        L = np.linalg.cholesky(s11)
        m = np.linalg.solve(L, s01.T) @ np.linalg.solve(s00, s01)
        m = np.linalg.solve(L, m.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular moment matrices in Johansen regression") from exc
    eig = np.sort(np.clip(np.linalg.eigvalsh((m + m.T) / 2), 0.0, 1.0 - 1e-15))[::-1]

    reports = []
    for r0_ in range(K):
        stat = -n * np.sum(np.log1p(-eig[r0_:]))
        cv90, cv95, cv99 = c_sjt(K - r0_, 0)
        reports.append(
            _report(
                f"johansen_trace_r{r0_}",
                stat,
                K - r0_,
                _table_p_value(stat, cv90, cv95, cv99),
                reject=stat > cv95,
                r0=r0_,
                crit_5pct=cv95,
                crit_10pct=cv90,
                crit_1pct=cv99,
                eigenvalues=eig.tolist(),
                nobs=n,
            )
        )
    return reports


# -- residual diagnostics ----------------------------------------------------------


def jarque_bera(residuals, mode: str = "joint") -> TestReport:
    """Multivariate Jarque-Bera test on Cholesky-standardized residuals.

    ``mode`` selects the joint statistic (df 2K) or one of its two
    components, skewness or kurtosis (df K each). The joint value is the sum
    of the two components.
    """
    e = np.asarray(residuals, dtype=float)
    if e.ndim == 1:
        e = e[:, None]
    T, K = e.shape
    if T < 8:
        raise DataError("Jarque-Bera needs at least 8 observations")
    d = e - e.mean(axis=0)
    S = d.T @ d / T
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("residual covariance is singular") from exc
    w = np.linalg.solve(L, d.T).T
    b1 = np.mean(w**3, axis=0)
    b2 = np.mean(w**4, axis=0)
    skew = T * (b1 @ b1) / 6.0
    kurt = T * ((b2 - 3.0) @ (b2 - 3.0)) / 24.0
    if mode == "joint":
        stat, df = skew + kurt, 2 * K
    elif mode == "skewness_only":
        stat, df = skew, K
    elif mode == "kurtosis_only":
        stat, df = kurt, K
    else:
        raise ValueError("mode must be joint, skewness_only or kurtosis_only")
    return _report(f"jarque_bera_{mode}", stat, df, stats.chi2.sf(stat, df), skewness=b1, kurtosis=b2)


def arch_lm(residuals, lags: int = 12) -> TestReport:
    """Engle's ARCH-LM test: T * R^2 of e^2 on its own lags."""
    e = np.asarray(residuals, dtype=float).ravel()
    if len(e) <= lags + 10:
        raise DataError("ARCH-LM needs more than lags + 10 observations")
    e2 = e**2
    if np.ptp(e2) == 0:
        raise NumericalError("squared residuals are constant")
    y = e2[lags:]
    X = np.column_stack([np.ones(len(y))] + [e2[lags - i : len(e2) - i] for i in range(1, lags + 1)])
    _, u = _ols(y, X)
    yc = y - y.mean()
    r2 = 1.0 - (u @ u) / (yc @ yc)
    stat = len(y) * r2
    return _report("arch_lm", stat, lags, stats.chi2.sf(stat, lags), nobs=len(y))


def _cross_moments(e, lags):
    T = len(e)
    return [e[h:].T @ e[: T - h] / T for h in range(lags + 1)]


def portmanteau(residuals, lags: int, p: int = 0, adjusted: bool = False) -> TestReport:
    """Multivariate portmanteau test for residual autocorrelation.

    The asymptotic form is ``T * sum_h tr(C_h' C_0^-1 C_h C_0^-1)``; with
    ``adjusted=True`` each term is weighted by ``T^2 / (T - h)`` instead
    (Ljung-Box style). ``p`` is the fitted VAR order used for the degrees
    of freedom ``K^2 (lags - p)``.
    """
    e = np.asarray(residuals, dtype=float)
    if e.ndim == 1:
        e = e[:, None]
    T, K = e.shape
    if not T > lags:
        raise DataError("portmanteau needs more observations than lags")
    if not lags > p:
        raise DataError("lags must exceed the fitted VAR order p")
    e = e - e.mean(axis=0)
    C = _cross_moments(e, lags)
    try:
        C0inv = np.linalg.inv(C[0])
    except np.linalg.LinAlgError as exc:
        raise NumericalError("degenerate residual covariance") from exc
    if not np.all(np.isfinite(C0inv)) or np.linalg.cond(C[0]) > 1e14:
        raise NumericalError("degenerate residual covariance")
    stat = 0.0
    for h in range(1, lags + 1):
        term = np.trace(C[h].T @ C0inv @ C[h] @ C0inv)
        stat += term * (T * T / (T - h) if adjusted else T)
    df = K * K * (lags - p)
    return _report("portmanteau", stat, df, stats.chi2.sf(stat, df), lags=lags, var_order=p, adjusted=adjusted)


def multivariate_arch_q(residuals, lags: int = 12) -> TestReport:
    """Ljung-Box Q(m) on the squared Mahalanobis norms e_t' S^-1 e_t.

    Stand-in for the family of multivariate ARCH tests; only this LM-type
    variant is provided.
    """
    e = np.asarray(residuals, dtype=float)
    T, K = e.shape
    d = e - e.mean(axis=0)
    S = d.T @ d / T
    try:
        s = np.einsum("ti,ij,tj->t", d, np.linalg.inv(S), d)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("degenerate residual covariance") from exc
    s = s - s.mean()
    denom = s @ s
    rho = np.array([s[h:] @ s[:-h] / denom for h in range(1, lags + 1)])
    stat = T * (T + 2) * np.sum(rho**2 / (T - np.arange(1, lags + 1)))
    return _report("multivariate_arch_q", stat, lags, stats.chi2.sf(stat, lags))


# -- stability --------------------------------------------------------------------


def cusum(y, X, a: float = CUSUM_A_5PCT) -> CusumPath:
    """Recursive-residual CUSUM with linear significance bands.

    The first ``k = X.shape[1]`` rows warm up the recursion; the path has
    ``T - k`` points and the bands are
    ``+/- a * (sqrt(T - k) + 2 (t - k) / sqrt(T - k))``.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    T, k = X.shape
    if T <= k + 2:
        raise DataError("CUSUM needs more than k + 2 observations")
    if np.ptp(y) == 0:
        raise NumericalError("zero-variance dependent variable")
    Xw, yw = X[:k], y[:k]
    if np.linalg.matrix_rank(Xw) < k:
        raise NumericalError("regressors are rank deficient on the warm-up window")
    P = np.linalg.inv(Xw.T @ Xw)
    b = P @ Xw.T @ yw
    w = np.empty(T - k)
    for i, t in enumerate(range(k, T)):
        x = X[t]
        Px = P @ x
        f = 1.0 + x @ Px
        err = y[t] - x @ b
        w[i] = err / np.sqrt(f)
        gain = Px / f
        b = b + gain * err
        P = P - np.outer(gain, Px)
    sigma = np.std(w, ddof=1)
    if not sigma > 0:
        raise NumericalError("recursive residuals have zero variance")
    path = np.cumsum(w) / sigma
    n = T - k
    steps = np.arange(1, n + 1)
    upper = a * (np.sqrt(n) + 2.0 * steps / np.sqrt(n))
    crossed = bool(np.any(np.abs(path) > upper))
    return CusumPath(np.arange(k, T), path, upper, -upper, crossed, float(sigma))


# -- two-sample comparison ----------------------------------------------------------


def welch_t_test(a, b) -> TestReport:
    """Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise DataError("each sample needs at least 2 values")
    va, vb = a.var(ddof=1) / na, b.var(ddof=1) / nb
    if va + vb == 0:
        raise NumericalError("both samples are constant; t statistic undefined")
    t = (a.mean() - b.mean()) / np.sqrt(va + vb)
    df = (va + vb) ** 2 / (va**2 / (na - 1) + vb**2 / (nb - 1))
    p = 2.0 * stats.t.sf(abs(t), df)
    return _report("welch_t", t, df, p, mean_a=a.mean(), mean_b=b.mean())
