"""Student-t GARCH(1,1) marginals and DCC / ADCC / t-copula DCC correlation layers.

All recursions are first-order linear filters, evaluated with
:func:`scipy.signal.lfilter` so that likelihood evaluations stay cheap
inside the simplex searches.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal, special, stats

from .exceptions import ConfigError, DataError, NumericalError

__all__ = [
    "GarchParams",
    "GarchFit",
    "DccParams",
    "CondCovPath",
    "PitPanel",
    "garch_variance",
    "garch_loglik",
    "fit_garch_t",
    "dcc_recursion",
    "normalize_q",
    "fit_dcc",
    "fit_t_copula_dcc",
    "fit_garch_dcc",
    "pit",
    "pit_panel",
    "cov_forecast",
    "simulate_garch_t",
]

logger = logging.getLogger(__name__)

NU_LO, NU_HI = 2.1, 100.0
_PERSIST_MAX = 0.9999


@dataclass(frozen=True)
class GarchParams:
    omega: float
    alpha: float
    beta: float
    nu: float = np.inf

    def __post_init__(self):
        if not self.omega > 0:
            raise ConfigError("omega must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be non-negative")
        if self.alpha + self.beta >= 1:
            raise ConfigError("alpha + beta must be below 1")
        if not (self.nu > 2):
            raise ConfigError("nu must exceed 2")

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.alpha - self.beta)


@dataclass(frozen=True)
class GarchFit:
    params: GarchParams
    variance: np.ndarray
    std_resid: np.ndarray
    loglik: float
    converged: bool
    nfev: int
    residuals: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class DccParams:
    """Correlation-dynamics parameters.

    ``g`` is zero for the symmetric model and ``nu_joint`` is ``None`` under
    a Gaussian second stage.
    """

    a: float
    b: float
    g: float
    nu_joint: float | None
    Qbar: np.ndarray
    Nbar: np.ndarray | None = None
    joint: str = "gaussian"
    loglik: float = np.nan
    converged: bool = True

    def __post_init__(self):
        if min(self.a, self.b, self.g) < 0:
            raise ConfigError("DCC coefficients must be non-negative")
        if self.a + self.b + self.g >= 1:
            raise ConfigError("a + b + g must be below 1")

    @property
    def asymmetric(self) -> bool:
        return self.Nbar is not None


@dataclass(frozen=True)
class CondCovPath:
    """Filtered conditional moments; arrays are indexed by time first."""

    vol: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    z: np.ndarray
    n: np.ndarray

    @property
    def D(self) -> np.ndarray:
        T, K = self.vol.shape
        out = np.zeros((T, K, K))
        out[:, np.arange(K), np.arange(K)] = self.vol
        return out

    @property
    def H(self) -> np.ndarray:
        return self.vol[:, :, None] * self.R * self.vol[:, None, :]


@dataclass(frozen=True)
class PitPanel:
    u: np.ndarray
    method: str

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if not np.all((u > 0) & (u < 1)):
            raise DataError("PIT values must lie strictly inside (0, 1)")
        object.__setattr__(self, "u", u)

    @property
    def values(self) -> np.ndarray:
        return self.u


# ---------------------------------------------------------------- marginals


def garch_variance(resid: np.ndarray, params: GarchParams, h0: float | None = None) -> np.ndarray:
    """``h_t = omega + alpha eps_{t-1}^2 + beta h_{t-1}`` with ``h_0`` the sample variance."""
    e = np.asarray(resid, dtype=float)
    h0 = float(np.var(e)) if h0 is None else float(h0)
    x = params.omega + params.alpha * e[:-1] ** 2
    h = np.empty_like(e)
    h[0] = h0
    if e.size > 1:
        h[1:] = signal.lfilter([1.0], [1.0, -params.beta], x, zi=[params.beta * h0])[0]
    return h


def _t_logpdf_std(e2_over_h: np.ndarray, nu: float) -> np.ndarray:
    """Log density of unit-variance Student-t at ``z`` given ``z**2`` (excludes the ``-0.5 log h`` term)."""
    if np.isinf(nu):
        return -0.5 * (np.log(2 * np.pi) + e2_over_h)
    c = special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2) - 0.5 * np.log(np.pi * (nu - 2))
    return c - (nu + 1) / 2 * np.log1p(e2_over_h / (nu - 2))


def garch_loglik(resid: np.ndarray, params: GarchParams, h0: float | None = None) -> float:
    e = np.asarray(resid, dtype=float)
    h = garch_variance(e, params, h0)
    if np.any(h <= 0):
        return -np.inf
    return float(np.sum(_t_logpdf_std(e**2 / h, params.nu) - 0.5 * np.log(h)))


def _logistic(x):
    return special.expit(x)


def _garch_unpack(theta) -> GarchParams:
    s = _PERSIST_MAX * _logistic(theta[1])
    alpha = s * _logistic(theta[2])
    return GarchParams(
        float(np.exp(theta[0])),
        float(alpha),
        float(s - alpha),
        float(NU_LO + (NU_HI - NU_LO) * _logistic(theta[3])),
    )


def _garch_pack(p: GarchParams) -> np.ndarray:
    s = p.alpha + p.beta
    nu = min(max(p.nu, NU_LO + 1e-6), NU_HI - 1e-6)
    return np.array(
        [
            np.log(p.omega),
            special.logit(min(max(s / _PERSIST_MAX, 1e-6), 1 - 1e-6)),
            special.logit(min(max(p.alpha / s, 1e-6), 1 - 1e-6)) if s > 0 else 0.0,
            special.logit((nu - NU_LO) / (NU_HI - NU_LO)),
        ]
    )


def _simplex_search(fun, starts, max_fev: int, xatol: float = 1e-8):
    """Nelder-Mead from each start; the best objective wins, first found on ties."""
    best = None
    for x0 in starts:
        res = optimize.minimize(
            fun,
            x0,
            method="Nelder-Mead",
            options={"xatol": xatol, "fatol": 1e-10, "maxfev": max_fev, "adaptive": len(x0) > 3},
        )
        if best is None or res.fun < best.fun:
            best = res
    return best


def fit_garch_t(
    resid,
    init: GarchParams | None = None,
    seed: int = 0,
    restarts: int = 3,
    max_fev: int = 4000,
) -> GarchFit:
    """Student-t GARCH(1,1) by maximum likelihood.

    Parameters
    ----------
    resid : array_like
        Mean-equation residuals.
    init : GarchParams, optional
        First starting point; the remaining restarts perturb it.
    seed : int
        Seed for the restart perturbations.

    Notes
    -----
    The search runs in ``(log omega, logit persistence, logit alpha share,
    logit nu)`` coordinates so every trial point is admissible. ``nu`` is
    confined to ``(2.1, 100]``; estimates at the upper edge indicate
    near-Gaussian tails and are returned as such.
    """
    e = np.asarray(resid, dtype=float).ravel()
    if e.size < 100:
        raise DataError("GARCH estimation needs at least 100 observations")
    var = float(np.var(e))
    if not var > 1e-14 * max(1.0, float(np.mean(e**2))):
        raise DataError("residual series has zero variance")
    init = init or GarchParams(0.1 * var, 0.05, 0.85, 8.0)
    e2 = e**2

    h0 = var

    def nll(theta):
        p = _garch_unpack(theta)
        x = p.omega + p.alpha * e2[:-1]
        h = np.empty_like(e)
        h[0] = h0
        h[1:] = signal.lfilter([1.0], [1.0, -p.beta], x, zi=[p.beta * h0])[0]
        val = -np.sum(_t_logpdf_std(e2 / h, p.nu) - 0.5 * np.log(h))
        return val if np.isfinite(val) else 1e300

    rng = np.random.default_rng(seed)
    x0 = _garch_pack(init)
    starts = [x0] + [x0 + rng.normal(0, 0.5, 4) for _ in range(restarts - 1)]
    res = _simplex_search(nll, starts, max_fev)
    params = _garch_unpack(res.x)
    h = garch_variance(e, params, h0)
    if not res.success:
        logger.warning("GARCH search stopped without converging: %s", res.message)
    return GarchFit(params, h, e / np.sqrt(h), -float(res.fun), bool(res.success), int(res.nfev), e)


def simulate_garch_t(params: GarchParams, T: int, rng, burn: int = 500) -> np.ndarray:
    """Draw a GARCH-t path with unit-variance Student-t innovations."""
    rng = np.random.default_rng(rng)
    nu = params.nu
    eta = rng.standard_t(nu, T + burn) * np.sqrt((nu - 2) / nu) if np.isfinite(nu) else rng.standard_normal(T + burn)
    e = np.empty(T + burn)
    h = params.unconditional_variance
    for t in range(T + burn):
        e[t] = np.sqrt(h) * eta[t]
        h = params.omega + params.alpha * e[t] ** 2 + params.beta * h
    return e[burn:]


# -------------------------------------------------------------- correlation


def dcc_recursion(z, a, b, Qbar, g: float = 0.0, Nbar=None) -> np.ndarray:
    """Quasi-correlation path.

    ``Q_0 = Qbar`` and, for ``t >= 1``,
    ``Q_t = (1-a-b-g) Qbar + a z_{t-1} z_{t-1}' + g n_{t-1} n_{t-1}' + b Q_{t-1}``
    with ``n = min(z, 0)``. The ``g`` term is dropped when ``Nbar`` is None.
    """
    z = np.asarray(z, dtype=float)
    T, K = z.shape
    Qbar = np.asarray(Qbar, dtype=float)
    c = (1.0 - a - b - g) * Qbar
    zz = z[:-1, :, None] * z[:-1, None, :]
    x = c + a * zz
    if Nbar is not None:
        n = np.minimum(z[:-1], 0.0)
        x = x + g * (n[:, :, None] * n[:, None, :])
    Q = np.empty((T, K, K))
    Q[0] = Qbar
    if T > 1:
        flat = signal.lfilter([1.0], [1.0, -b], x.reshape(T - 1, K * K), axis=0, zi=(b * Qbar).reshape(1, -1))[0]
        Q[1:] = flat.reshape(T - 1, K, K)
    return Q


def normalize_q(Q: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.einsum("...ii->...i", Q))
    R = Q / (d[..., :, None] * d[..., None, :])
    K = Q.shape[-1]
    R[..., np.arange(K), np.arange(K)] = 1.0
    return R


def _corr(x):
    C = np.corrcoef(x, rowvar=False)
    return (C + C.T) / 2


def _quad_logdet(R, z):
    L = np.linalg.cholesky(R)
    w = np.linalg.solve(L, z[..., None])[..., 0]
    logdet = 2.0 * np.sum(np.log(np.einsum("...ii->...i", L)), axis=-1)
    return np.sum(w**2, axis=-1), logdet


def _mvt_std_logpdf(quad, logdet, K, nu):
    c = special.gammaln((nu + K) / 2) - special.gammaln(nu / 2) - K / 2 * np.log(np.pi * (nu - 2))
    return c - 0.5 * logdet - (nu + K) / 2 * np.log1p(quad / (nu - 2))


def _dcc_unpack(theta, asymmetric, joint):
    k = 3 if asymmetric else 2
    logits = np.append(theta[:k], 0.0)
    w = special.softmax(logits) * _PERSIST_MAX
    a, b = w[0], w[1]
    g = w[2] if asymmetric else 0.0
    nu = float(NU_LO + (NU_HI - NU_LO) * _logistic(theta[k])) if joint != "gaussian" else None
    return float(a), float(b), float(g), nu


def _dcc_pack(a, b, g, nu, asymmetric, joint):
    parts = [a, b] + ([g] if asymmetric else [])
    slack = _PERSIST_MAX - sum(parts)
    if slack <= 0 or min(parts) < 0:
        raise ConfigError("initial DCC parameters violate a + b + g < 1")
    parts = np.maximum(parts, 1e-6)
    theta = list(np.log(parts / slack))
    if joint != "gaussian":
        nu = min(max(nu, NU_LO + 1e-6), NU_HI - 1e-6)
        theta.append(special.logit((nu - NU_LO) / (NU_HI - NU_LO)))
    return np.array(theta)


def _first_bad_t(R):
    for t in range(R.shape[0]):
        try:
            np.linalg.cholesky(R[t])
        except np.linalg.LinAlgError:
            return t
    return None


def fit_dcc(
    z,
    asymmetric: bool = False,
    joint_dist: str = "gaussian",
    vol=None,
    seed: int = 0,
    restarts: int = 3,
    max_fev: int = 3000,
    init: tuple | None = None,
):
    """Second-stage DCC or ADCC estimation on standardized residuals.

    Parameters
    ----------
    z : ndarray, shape (T, K)
        Residuals divided by their fitted GARCH volatilities.
    asymmetric : bool
        Add the ``g n n'`` term (``n = min(z, 0)``).
    joint_dist : {"gaussian", "student_t"}
        Joint density of ``z`` given ``R_t``; a Student-t estimates ``nu``.
    vol : ndarray, shape (T, K), optional
        Marginal volatilities stored in the returned path (ones if omitted).
    init : tuple, optional
        ``(a, b[, g][, nu])`` first starting point.

    Returns
    -------
    DccParams, CondCovPath
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[1] < 2:
        raise DataError("z must be a T x K matrix with K >= 2")
    T, K = z.shape
    if T < 100:
        raise DataError("DCC estimation needs at least 100 observations")
    if joint_dist in ("t", "student-t"):
        joint_dist = "student_t"
    if joint_dist not in ("gaussian", "student_t"):
        raise ConfigError("joint_dist must be 'gaussian' or 'student_t'")
    Qbar = _corr(z)
    n = np.minimum(z, 0.0)
    Nbar = n.T @ n / T if asymmetric else None
    zz_sum = np.sum(z**2, axis=1)

    def nll(theta):
        a, b, g, nu = _dcc_unpack(theta, asymmetric, joint_dist)
        R = normalize_q(dcc_recursion(z, a, b, Qbar, g, Nbar))
        try:
            quad, logdet = _quad_logdet(R, z)
        except np.linalg.LinAlgError:
            return 1e300
        if nu is None:
            ll = -0.5 * np.sum(logdet + quad - zz_sum)
        else:
            ll = np.sum(_mvt_std_logpdf(quad, logdet, K, nu))
        return -ll if np.isfinite(ll) else 1e300

    if init is None:
        init = (0.03, 0.90) + ((0.02,) if asymmetric else ()) + ((8.0,) if joint_dist != "gaussian" else ())
    init = list(init)
    a0, b0 = init[0], init[1]
    g0 = init[2] if asymmetric else 0.0
    nu0 = init[-1] if joint_dist != "gaussian" else None
    x0 = _dcc_pack(a0, b0, g0, nu0, asymmetric, joint_dist)
    rng = np.random.default_rng(seed)
    starts = [x0] + [x0 + rng.normal(0, 0.5, x0.size) for _ in range(restarts - 1)]
    res = _simplex_search(nll, starts, max_fev)
    if res.fun >= 1e300:
        raise NumericalError("no admissible DCC parameters found")
    a, b, g, nu = _dcc_unpack(res.x, asymmetric, joint_dist)
    Q = dcc_recursion(z, a, b, Qbar, g, Nbar)
    R = normalize_q(Q)
    bad = _first_bad_t(R)
    if bad is not None:
        raise NumericalError(f"conditional correlation not positive definite at t={bad}")
    params = DccParams(a, b, g, nu, Qbar, Nbar, joint_dist, -float(res.fun), bool(res.success))
    vol = np.ones_like(z) if vol is None else np.asarray(vol, dtype=float)
    return params, CondCovPath(vol, Q, R, z, n)


def _t_quantile(u, nu):
    # incomplete-beta inversion; several times faster than stdtrit
    w = special.betaincinv(nu / 2, 0.5, 2 * np.minimum(u, 1 - u))
    return np.sign(u - 0.5) * np.sqrt(nu * (1 / w - 1))


def _t_copula_parts(u, nu):
    x = _t_quantile(u, nu)
    xs = x * np.sqrt((nu - 2) / nu)
    return x, xs


def fit_t_copula_dcc(
    u,
    init: tuple | None = None,
    seed: int = 0,
    restarts: int = 3,
    max_fev: int = 3000,
    asymmetric: bool = False,
):
    """DCC dynamics inside a Student-t copula.

    Each trial ``nu`` maps ``u`` to t quantiles; the recursion runs on those
    quantiles rescaled to unit variance, and the objective is the t-copula
    log density (joint t over the product of marginal t densities).

    Returns
    -------
    DccParams, CondCovPath
        ``path.z`` holds the unit-variance quantiles at the estimated ``nu``.
    """
    u = np.asarray(getattr(u, "u", u), dtype=float)
    if u.ndim != 2 or u.shape[1] < 2:
        raise DataError("u must be a T x K matrix with K >= 2")
    if not np.all((u > 0) & (u < 1)):
        raise DataError("u must lie strictly inside (0, 1)")
    T, K = u.shape
    if T < 100:
        raise DataError("t-copula DCC estimation needs at least 100 observations")

    def nll(theta):
        a, b, g, nu = _dcc_unpack(theta, asymmetric, "student_t")
        x, xs = _t_copula_parts(u, nu)
        Qbar = _corr(xs)
        Nbar = None
        if asymmetric:
            nn = np.minimum(xs, 0)
            Nbar = nn.T @ nn / T
        R = normalize_q(dcc_recursion(xs, a, b, Qbar, g, Nbar))
        try:
            quad, logdet = _quad_logdet(R, x)
        except np.linalg.LinAlgError:
            return 1e300
        joint = (
            special.gammaln((nu + K) / 2)
            - special.gammaln(nu / 2)
            - K / 2 * np.log(np.pi * nu)
            - 0.5 * logdet
            - (nu + K) / 2 * np.log1p(quad / nu)
        )
        marg = (
            special.gammaln((nu + 1) / 2)
            - special.gammaln(nu / 2)
            - 0.5 * np.log(np.pi * nu)
            - (nu + 1) / 2 * np.log1p(x**2 / nu)
        )
        ll = np.sum(joint) - np.sum(marg)
        return -ll if np.isfinite(ll) else 1e300

    init = list(init) if init is not None else [0.03, 0.90] + ([0.02] if asymmetric else []) + [10.0]
    x0 = _dcc_pack(init[0], init[1], init[2] if asymmetric else 0.0, init[-1], asymmetric, "student_t")
    rng = np.random.default_rng(seed)
    starts = [x0] + [x0 + rng.normal(0, 0.5, x0.size) for _ in range(restarts - 1)]
    res = _simplex_search(nll, starts, max_fev)
    if res.fun >= 1e300:
        raise NumericalError("no admissible t-copula DCC parameters found")
    a, b, g, nu = _dcc_unpack(res.x, asymmetric, "student_t")
    _, xs = _t_copula_parts(u, nu)
    Qbar = _corr(xs)
    n = np.minimum(xs, 0.0)
    Nbar = n.T @ n / T if asymmetric else None
    Q = dcc_recursion(xs, a, b, Qbar, g, Nbar)
    R = normalize_q(Q)
    bad = _first_bad_t(R)
    if bad is not None:
        raise NumericalError(f"conditional correlation not positive definite at t={bad}")
    params = DccParams(a, b, g, nu, Qbar, Nbar, "tcopula", -float(res.fun), bool(res.success))
    return params, CondCovPath(np.ones_like(xs), Q, R, xs, n)


# -------------------------------------------------------------------- PIT


def pit(resid, params: GarchParams | None = None, method: str = "parametric-t", variance=None) -> np.ndarray:
    """Probability integral transform of one residual series.

    ``parametric-t`` evaluates the unit-variance Student-t CDF of
    ``eps_t / sqrt(h_t)`` (``variance`` defaults to the GARCH path implied by
    ``params``); ``empirical`` returns ordinal ranks over ``T + 1``.
    Output is clipped to ``[1e-10, 1 - 1e-10]``.
    """
    e = np.asarray(resid, dtype=float).ravel()
    if method == "empirical":
        u = (stats.rankdata(e, method="ordinal")) / (e.size + 1.0)
    elif method == "parametric-t":
        if params is None:
            raise ConfigError("parametric PIT requires GARCH parameters")
        h = garch_variance(e, params) if variance is None else np.asarray(variance, dtype=float)
        z = e / np.sqrt(h)
        nu = params.nu
        if np.isfinite(nu):
            u = stats.t.cdf(z * np.sqrt(nu / (nu - 2)), nu)
        else:
            u = stats.norm.cdf(z)
    else:
        raise ConfigError("method must be 'parametric-t' or 'empirical'")
    return np.clip(u, 1e-10, 1 - 1e-10)


def pit_panel(residuals, fits=None, method: str = "empirical") -> PitPanel:
    """Column-wise :func:`pit`; ``fits`` is a list of :class:`GarchFit` for the parametric method."""
    e = np.asarray(getattr(residuals, "values", residuals), dtype=float)
    cols = []
    for k in range(e.shape[1]):
        if method == "empirical":
            cols.append(pit(e[:, k], method="empirical"))
        else:
            f = fits[k]
            cols.append(pit(e[:, k], f.params, "parametric-t", f.variance))
    return PitPanel(np.column_stack(cols), method)


# ------------------------------------------------------- two-stage helpers


def fit_garch_dcc(residuals, asymmetric=False, joint="gaussian", seed=0):
    """Fit GARCH-t marginals then the requested correlation layer.

    ``joint`` is ``"gaussian"``, ``"student_t"`` or ``"tcopula"``; the
    t-copula layer uses parametric PIT values of the marginal fits.
    """
    e = np.asarray(getattr(residuals, "values", residuals), dtype=float)
    ss = np.random.SeedSequence(seed)
    child = ss.spawn(e.shape[1] + 1)
    fits = [fit_garch_t(e[:, k], seed=int(child[k].generate_state(1)[0])) for k in range(e.shape[1])]
    vol = np.column_stack([np.sqrt(f.variance) for f in fits])
    z = e / vol
    dseed = int(child[-1].generate_state(1)[0])
    if joint == "tcopula":
        u = pit_panel(e, fits, "parametric-t")
        params, path = fit_t_copula_dcc(u, seed=dseed, asymmetric=asymmetric)
        path = CondCovPath(vol, path.Q, path.R, z, np.minimum(z, 0.0))
    else:
        params, path = fit_dcc(z, asymmetric, joint, vol=vol, seed=dseed)
    return fits, params, path


def cov_forecast(garch: list, dcc: DccParams, path: CondCovPath, h: int = 1) -> np.ndarray:
    """Multi-step conditional covariance forecasts ``H_{T+1}, ..., H_{T+h}``.

    The first step is one more pass of both recursions from the last filtered
    state. Later steps replace ``eps^2`` by its expectation ``h`` and
    ``z z'`` (``n n'``) by ``Q`` (``Nbar``).
    """
    K = path.z.shape[1]
    z_T = path.z[-1]
    e_T = path.vol[-1] * z_T
    hv = path.vol[-1] ** 2
    om = np.array([g.omega for g in garch])
    al = np.array([g.alpha for g in garch])
    be = np.array([g.beta for g in garch])
    a, b, g = dcc.a, dcc.b, dcc.g
    c = (1.0 - a - b - g) * dcc.Qbar
    Q = path.Q[-1]
    out = np.empty((h, K, K))
    for s in range(h):
        if s == 0:
            hv = om + al * e_T**2 + be * hv
            Qn = c + a * np.outer(z_T, z_T)
            if dcc.Nbar is not None:
                n_T = np.minimum(z_T, 0.0)
                Qn = Qn + g * np.outer(n_T, n_T)
            Q = Qn + b * Q
        else:
            hv = om + (al + be) * hv
            Qn = c + a * Q
            if dcc.Nbar is not None:
                Qn = Qn + g * dcc.Nbar
            Q = Qn + b * Q
        R = normalize_q(Q)
        sd = np.sqrt(hv)
        out[s] = sd[:, None] * R * sd[None, :]
    return out
