"""Archimedean copulas: evaluation, frailty sampling, MLE, mixtures and bootstrap GoF.

Families and parameter domains:

* Clayton, ``theta > 0`` (lower-tail dependence)
* Gumbel, ``theta >= 1`` (upper-tail dependence)
* Frank, ``theta != 0`` (no tail dependence; densities for K = 2 only)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy import integrate, optimize, special, stats

from .exceptions import ConfigError, DataError

__all__ = [
    "FAMILIES",
    "CopulaSpec",
    "MixtureParams",
    "SingleFit",
    "MixtureFit",
    "GofResult",
    "copula_cdf",
    "copula_density",
    "log_density",
    "sample",
    "kendall_tau",
    "tau_of_theta",
    "theta_of_tau",
    "fit_single",
    "fit_mixture",
    "pseudo_observations",
    "empirical_copula",
    "gof_bootstrap",
]

logger = logging.getLogger(__name__)

FAMILIES = ("clayton", "frank", "gumbel")
THETA_MAX = 50.0


@dataclass(frozen=True)
class CopulaSpec:
    family: str
    theta: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown copula family {self.family!r}")
        t = float(self.theta)
        if not np.isfinite(t):
            raise ConfigError("theta must be finite")
        if self.family == "clayton" and not t > 0:
            raise ConfigError("clayton theta must be positive")
        if self.family == "gumbel" and not t >= 1:
            raise ConfigError("gumbel theta must be at least 1")
        if self.family == "frank" and t == 0:
            raise ConfigError("frank theta must be non-zero")
        object.__setattr__(self, "theta", t)

    @property
    def tau(self) -> float:
        return tau_of_theta(self.family, self.theta)


@dataclass(frozen=True)
class MixtureParams:
    """Convex combination of one Clayton, one Frank and one Gumbel copula."""

    components: tuple
    weights: np.ndarray

    def __post_init__(self):
        comps = tuple(self.components)
        if tuple(c.family for c in comps) != FAMILIES:
            raise ConfigError("mixture components must be (clayton, frank, gumbel)")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (3,) or np.any(w < 0) or abs(w.sum() - 1) > 1e-10:
            raise ConfigError("mixture weights must lie on the simplex")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", w)


Copula = Union[CopulaSpec, MixtureParams]


@dataclass(frozen=True)
class SingleFit:
    spec: CopulaSpec
    loglik: float
    at_boundary: bool
    tau_init: float
    converged: bool


@dataclass(frozen=True)
class MixtureFit:
    params: MixtureParams
    loglik: float
    converged: bool
    restarts: int


@dataclass(frozen=True)
class GofResult:
    statistic_global: float
    statistic_tail: float
    p_global: float
    p_tail: float
    replications: int
    seed: int
    tail_threshold: float = 0.25


def _as_points(u) -> np.ndarray:
    u = np.asarray(getattr(u, "u", u), dtype=float)
    if u.ndim == 1:
        u = u[None, :]
    if u.shape[1] < 2:
        raise DataError("copula points need at least 2 coordinates")
    return u


def _check_interior(u):
    if not np.all((u > 0) & (u < 1)):
        raise DataError("copula arguments must lie strictly inside (0, 1)")


# ------------------------------------------------------------------ CDFs


def _cdf(spec: CopulaSpec, u: np.ndarray) -> np.ndarray:
    th, K = spec.theta, u.shape[1]
    lu = np.log(u)
    if spec.family == "clayton":
        s = np.sum(np.expm1(-th * lu), axis=1)
        return np.exp(-np.log1p(s) / th)
    if spec.family == "gumbel":
        t = np.sum((-lu) ** th, axis=1)
        return np.exp(-(t ** (1 / th)))
    if K > 2 and th < 0:
        raise ConfigError("frank with negative theta is not a copula for K > 2")
    num = np.prod(np.expm1(-th * u), axis=1)
    den = np.expm1(-th) ** (K - 1)
    return -np.log1p(num / den) / th


def copula_cdf(spec: Copula, u) -> np.ndarray | float:
    """Copula CDF at one point (shape ``(K,)``) or many (``(n, K)``)."""
    scalar = np.ndim(getattr(u, "u", u)) == 1
    pts = _as_points(u)
    _check_interior(pts)
    if isinstance(spec, MixtureParams):
        out = sum(w * _cdf(c, pts) for w, c in zip(spec.weights, spec.components) if w > 0)
    else:
        out = _cdf(spec, pts)
    return float(out[0]) if scalar else out


# -------------------------------------------------------------- densities


@lru_cache(maxsize=None)
def _stirling1(n: int, k: int) -> int:
    """Signed Stirling numbers of the first kind."""
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return _stirling1(n - 1, k - 1) - (n - 1) * _stirling1(n - 1, k)


@lru_cache(maxsize=None)
def _gumbel_poly_coef(d: int, alpha: float) -> tuple:
    coefs = []
    for k in range(1, d + 1):
        acc = sum(
            alpha**j * _stirling1(d, j) * float(special.stirling2(j, k, exact=True))
            for j in range(k, d + 1)
        )
        coefs.append((-1) ** (d - k) * acc)
    return tuple(coefs)


def _log_density(spec: CopulaSpec, u: np.ndarray) -> np.ndarray:
    th, K = spec.theta, u.shape[1]
    lu = np.log(u)
    if spec.family == "clayton":
        s = np.log1p(np.sum(np.expm1(-th * lu), axis=1))
        const = np.sum(np.log1p(th * np.arange(K)))
        return const - (th + 1) * np.sum(lu, axis=1) - (K + 1 / th) * s
    if spec.family == "gumbel":
        x = -lu
        t = np.sum(x**th, axis=1)
        a = 1.0 / th
        ta = t**a
        coefs = _gumbel_poly_coef(K, a)
        poly = sum(c * ta ** (k + 1) for k, c in enumerate(coefs))
        return (
            -ta
            - K * np.log(t)
            + np.log(poly)
            + K * np.log(th)
            + (th - 1) * np.sum(np.log(x), axis=1)
            - np.sum(lu, axis=1)
        )
    if K != 2:
        raise ConfigError("frank density is only supported for K = 2")
    if abs(th) < 1e-12:
        return np.zeros(u.shape[0])
    x, y = -th * u[:, 0], -th * u[:, 1]
    # log |e^x + e^y - e^-th - e^(x+y)|, the denominator root, without cancellation
    terms = np.stack([x, y, np.full_like(x, -th), x + y])
    log_den, _ = special.logsumexp(
        terms, axis=0, b=np.array([1.0, 1.0, -1.0, -1.0])[:, None], return_sign=True
    )
    return np.log(th * -np.expm1(-th)) + x + y - 2 * log_den


def log_density(spec: Copula, u) -> np.ndarray:
    pts = _as_points(u)
    _check_interior(pts)
    if isinstance(spec, MixtureParams):
        terms = [
            np.log(w) + _log_density(c, pts)
            for w, c in zip(spec.weights, spec.components)
            if w > 0
        ]
        return special.logsumexp(np.vstack(terms), axis=0)
    return _log_density(spec, pts)


def copula_density(spec: Copula, u) -> np.ndarray | float:
    """Copula density ``c(u)``; same point conventions as :func:`copula_cdf`."""
    scalar = np.ndim(getattr(u, "u", u)) == 1
    out = np.exp(log_density(spec, u))
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------- sampling


def _positive_stable(alpha: float, n: int, rng) -> np.ndarray:
    """Draws with Laplace transform ``exp(-s**alpha)`` (Kanter's representation)."""
    if alpha == 1.0:
        return np.ones(n)
    th = rng.uniform(0, np.pi, n)
    w = rng.exponential(size=n)
    return (np.sin(alpha * th) / np.sin(th) ** (1 / alpha)) * (
        np.sin((1 - alpha) * th) / w
    ) ** ((1 - alpha) / alpha)


def _frank_conditional(theta, n, rng):
    u = rng.uniform(size=n)
    w = rng.uniform(size=n)
    E = np.expm1(-theta)
    U = np.expm1(-theta * u)
    a = w * E / (np.exp(-theta * u) - w * U)
    v = -np.log1p(a) / theta
    return np.column_stack([u, v])


def _sample_single(spec: CopulaSpec, n: int, K: int, rng) -> np.ndarray:
    th = spec.theta
    if spec.family == "frank" and (th < 0 or -np.expm1(-th) >= 1 - 1e-15):
        if K != 2:
            raise ConfigError("frank sampling with negative theta needs K = 2")
        return _frank_conditional(th, n, rng)
    e = rng.exponential(size=(n, K))
    if spec.family == "clayton":
        v = rng.gamma(1 / th, 1.0, size=n)
        s = e / v[:, None]
        return np.exp(-np.log1p(s) / th)
    if spec.family == "gumbel":
        v = _positive_stable(1 / th, n, rng)
        s = e / v[:, None]
        return np.exp(-(s ** (1 / th)))
    p = -np.expm1(-th)
    v = rng.logseries(p, size=n)
    s = e / v[:, None]
    return -np.log1p(-p * np.exp(-s)) / th


def sample(spec: Copula, n: int, seed=None, K: int = 2) -> np.ndarray:
    """Draw ``n`` points from ``spec`` via Marshall-Olkin frailties.

    Mixtures pick a component per draw according to the weights.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    if isinstance(spec, MixtureParams):
        which = rng.choice(3, size=n, p=spec.weights)
        out = np.empty((n, K))
        for j, comp in enumerate(spec.components):
            idx = np.flatnonzero(which == j)
            if idx.size:
                out[idx] = _sample_single(comp, idx.size, K, rng)
    else:
        out = _sample_single(spec, n, K, rng)
    return np.clip(out, 1e-12, 1 - 1e-12)


# ------------------------------------------------------------ Kendall's tau


def _tie_pairs(v: np.ndarray) -> int:
    _, counts = np.unique(v, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def kendall_tau(x, method: str = "auto", block: int = 256) -> float:
    """Tau-a: ``(concordant - discordant) / (n (n - 1) / 2)``; ties count as neither.

    ``method="pairs"`` counts every pair directly. ``method="merge"`` takes
    the O(n log n) tau-b from :func:`scipy.stats.kendalltau` and rescales it
    with the tie counts, which gives the same value. ``"auto"`` counts pairs
    up to n = 2000.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2 or x.shape[0] < 2:
        raise DataError("kendall_tau needs an n x 2 sample with n >= 2")
    a, b = x[:, 0], x[:, 1]
    n = a.size
    n0 = n * (n - 1) / 2
    if method == "auto":
        method = "pairs" if n <= 2000 else "merge"
    if method == "merge":
        ta, tb = _tie_pairs(a), _tie_pairs(b)
        if ta == n0 or tb == n0:
            return 0.0
        tau_b = stats.kendalltau(a, b).statistic
        return float(tau_b * np.sqrt((n0 - ta) * (n0 - tb)) / n0)
    total = 0
    for i0 in range(0, n - 1, block):
        i1 = min(i0 + block, n)
        # pairs inside the block (upper triangle), then block rows against later rows
        da = np.sign(a[i0:i1, None] - a[None, i0:i1])
        db = np.sign(b[i0:i1, None] - b[None, i0:i1])
        total += int(np.sum(np.triu(da * db, 1)))
        if i1 < n:
            total += int(np.sum(np.sign(a[i1:][None, :] - a[i0:i1, None]) * np.sign(b[i1:][None, :] - b[i0:i1, None])))
    return total / n0


def _debye1(x: float) -> float:
    if x == 0:
        return 1.0
    val, _ = integrate.quad(lambda t: t / np.expm1(t) if t > 0 else 1.0, 0, abs(x))
    d = val / abs(x)
    return d if x > 0 else d + abs(x) / 2


def tau_of_theta(family: str, theta: float) -> float:
    if family == "clayton":
        return theta / (theta + 2)
    if family == "gumbel":
        return 1 - 1 / theta
    if family == "frank":
        if theta == 0:
            return 0.0
        return 1 - 4 / theta * (1 - _debye1(theta))
    raise ConfigError(f"unknown copula family {family!r}")


def theta_of_tau(family: str, tau: float) -> float:
    """Invert the family's tau relation (Frank by root finding)."""
    tau = float(np.clip(tau, -0.99, 0.99))
    if family == "clayton":
        return 2 * tau / (1 - tau)
    if family == "gumbel":
        return 1 / (1 - tau)
    if family == "frank":
        if abs(tau) < 1e-10:
            return 0.0
        sign = np.sign(tau)
        f = lambda t: tau_of_theta("frank", t) - abs(tau)
        hi = 1.0
        while f(hi) < 0:
            hi *= 2
        return float(sign * optimize.brentq(f, 1e-10, hi, xtol=1e-12))
    raise ConfigError(f"unknown copula family {family!r}")


def _mean_pairwise_tau(u: np.ndarray) -> float:
    K = u.shape[1]
    taus = [stats.kendalltau(u[:, i], u[:, j])[0] for i in range(K) for j in range(i + 1, K)]
    return float(np.nanmean(taus))


# -------------------------------------------------------------- estimation

_BOUNDS = {
    "clayton": (1e-6, THETA_MAX),
    "gumbel": (1.0, THETA_MAX),
    "frank": (-THETA_MAX, THETA_MAX),
}


def _nll_single(family, u):
    def f(x):
        th = float(x[0]) if np.ndim(x) else float(x)
        if family == "frank" and th == 0.0:
            th = 1e-12
        spec = CopulaSpec.__new__(CopulaSpec)
        object.__setattr__(spec, "family", family)
        object.__setattr__(spec, "theta", th)
        val = -np.sum(_log_density(spec, u))
        return val if np.isfinite(val) else 1e300

    return f


def fit_single(u, family: str) -> SingleFit:
    """Maximum-likelihood ``theta`` started from Kendall-tau inversion."""
    u = _as_points(u)
    _check_interior(u)
    if u.shape[0] < 50:
        raise DataError("single-family copula fit needs at least 50 observations")
    if family not in FAMILIES:
        raise ConfigError(f"unknown copula family {family!r}")
    if family == "frank" and u.shape[1] != 2:
        raise ConfigError("frank likelihood is only supported for K = 2")
    tau = _mean_pairwise_tau(u)
    lo, hi = _BOUNDS[family]
    th0 = float(np.clip(theta_of_tau(family, tau), lo, hi))
    if family == "frank" and th0 == 0:
        th0 = 1e-3
    if family == "clayton" and th0 <= lo:
        th0 = 0.05
    nll = _nll_single(family, u)
    res = optimize.minimize(nll, [th0], method="L-BFGS-B", bounds=[(lo, hi)])
    th = float(res.x[0])
    if family == "frank" and th == 0.0:
        th = 1e-12
    boundary = bool(th <= lo + 1e-8 or th >= hi - 1e-8)
    if family == "gumbel" and tau <= 0:
        boundary = True
        logger.info("non-positive Kendall tau: gumbel estimate held at the independence boundary")
    return SingleFit(CopulaSpec(family, th), -float(res.fun), boundary, tau, bool(res.success))


def _mix_unpack(x) -> MixtureParams:
    w = special.softmax(np.array([x[0], x[1], 0.0]))
    hi = np.log(THETA_MAX)
    th_c = float(np.clip(np.exp(min(x[2], hi)), 1e-6, THETA_MAX))
    th_f = float(np.clip(x[3], -THETA_MAX, THETA_MAX)) or 1e-12
    th_g = float(np.clip(1 + np.exp(min(x[4], hi)), 1.0, THETA_MAX))
    comps = (CopulaSpec("clayton", th_c), CopulaSpec("frank", th_f), CopulaSpec("gumbel", th_g))
    return MixtureParams(comps, w / w.sum())


def _mixture_loglik(params: MixtureParams, u) -> float:
    return float(np.sum(log_density(params, u)))


def fit_mixture(u, restarts: int = 5, seed: int = 0, max_fev: int = 3000) -> MixtureFit:
    """Clayton + Frank + Gumbel mixture by maximum likelihood (K = 2).

    Weights are a softmax of two free logits; ``theta`` uses log (Clayton),
    identity (Frank) and ``1 + exp`` (Gumbel) transforms. Starts combine the
    single-family estimates with random weights. The reported optimum is the
    best of the searches and of each pure single-family fit, so the mixture
    likelihood never falls below the best single family.
    """
    u = _as_points(u)
    _check_interior(u)
    if u.shape[0] < 100:
        raise DataError("mixture copula fit needs at least 100 observations")
    if u.shape[1] != 2:
        raise ConfigError("mixture copula is only supported for K = 2")
    singles = {f: fit_single(u, f) for f in FAMILIES}
    th_c = singles["clayton"].spec.theta
    th_f = singles["frank"].spec.theta
    th_g = singles["gumbel"].spec.theta
    base = np.array([0.0, 0.0, np.log(th_c), th_f, np.log(max(th_g - 1, 1e-6))])

    def nll(x):
        val = -_mixture_loglik(_mix_unpack(x), u)
        return val if np.isfinite(val) else 1e300

    rng = np.random.default_rng(seed)
    starts = [base] + [
        base + np.concatenate([rng.normal(0, 2, 2), rng.normal(0, 0.5, 3)]) for _ in range(restarts - 1)
    ]
    best_x, best_f, conv = None, np.inf, False
    for x0 in starts:
        res = optimize.minimize(
            nll, x0, method="Nelder-Mead", options={"xatol": 1e-8, "fatol": 1e-10, "maxfev": max_fev, "adaptive": True}
        )
        if res.fun < best_f:
            best_x, best_f, conv = res.x, res.fun, bool(res.success)
    params = _mix_unpack(best_x)
    ll = -float(best_f)
    comps = list(params.components)
    for j, f in enumerate(FAMILIES):
        if singles[f].loglik > ll:
            cs = list(comps)
            cs[j] = singles[f].spec
            w = np.zeros(3)
            w[j] = 1.0
            params, ll, conv = MixtureParams(tuple(cs), w), singles[f].loglik, singles[f].converged
            comps = cs
    return MixtureFit(params, ll, conv, restarts)


# ------------------------------------------------------------ goodness of fit


def pseudo_observations(x) -> np.ndarray:
    x = np.asarray(getattr(x, "u", x), dtype=float)
    return stats.rankdata(x, axis=0, method="ordinal") / (x.shape[0] + 1.0)


def empirical_copula(data: np.ndarray, at: np.ndarray | None = None) -> np.ndarray:
    """``C_n(v) = n^-1 #{s : data_s <= v coordinatewise}`` at each row of ``at``."""
    at = data if at is None else at
    le = np.ones((at.shape[0], data.shape[0]), dtype=bool)
    for k in range(data.shape[1]):
        le &= data[None, :, k] <= at[:, None, k]
    return le.mean(axis=1)


def _cvm(U, spec, tail):
    diff2 = (empirical_copula(U) - copula_cdf(spec, U)) ** 2
    tail_mask = np.all(U <= tail, axis=1)
    return float(np.sum(diff2)), float(np.sum(diff2[tail_mask]))


def _refit(U, spec, mix_restarts):
    if isinstance(spec, MixtureParams):
        return fit_mixture(U, restarts=mix_restarts, seed=0).params
    return fit_single(U, spec.family).spec


def gof_bootstrap(
    u,
    spec: Copula,
    B: int = 2000,
    seed: int = 0,
    tail: float = 0.25,
    mix_restarts: int = 2,
) -> GofResult:
    """Parametric-bootstrap Cramer-von Mises test of a fitted copula.

    ``Sn`` sums squared gaps between the empirical and fitted copula over the
    pseudo-observations; ``SnC`` keeps only points with every coordinate at
    most ``tail``. Each replicate samples ``n`` points from ``spec``, refits
    the same family (or mixture) and recomputes both statistics. Replicate
    ``b`` draws from ``default_rng([seed, b])``, so results do not depend on
    evaluation order.
    """
    if B < 99:
        raise ConfigError("gof_bootstrap needs B >= 99 replications")
    U = pseudo_observations(u)
    n, K = U.shape
    s_glob, s_tail = _cvm(U, spec, tail)
    boot = np.empty((B, 2))
    for b in range(B):
        rng = np.random.default_rng([seed, b])
        Ub = pseudo_observations(sample(spec, n, rng, K=K))
        boot[b] = _cvm(Ub, _refit(Ub, spec, mix_restarts), tail)
    p_g = (1 + np.sum(boot[:, 0] >= s_glob)) / (B + 1)
    p_t = (1 + np.sum(boot[:, 1] >= s_tail)) / (B + 1)
    return GofResult(s_glob, s_tail, float(p_g), float(p_t), B, seed, tail)
