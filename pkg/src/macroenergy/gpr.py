"""RBF Gaussian process regression and the structural + residual hybrid forecast."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .exceptions import DataError, NumericalError

__all__ = [
    "GprModel",
    "HybridForecast",
    "rbf_kernel",
    "log_marginal_likelihood",
    "fit_gpr",
    "predict",
    "residual_features",
    "residual_query",
    "fit_residual_gprs",
    "hybrid_forecast",
]

JITTERS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


def rbf_kernel(A, B, length_scale: float, signal_sd: float) -> np.ndarray:
    """``signal_sd**2 * exp(-|a - b|**2 / (2 length_scale**2))``."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    d2 = (
        np.sum(A**2, axis=1)[:, None]
        + np.sum(B**2, axis=1)[None, :]
        - 2.0 * A @ B.T
    )
    np.maximum(d2, 0.0, out=d2)
    return signal_sd**2 * np.exp(-0.5 * d2 / length_scale**2)


def _sqdist(X):
    d2 = np.sum(X**2, 1)[:, None] + np.sum(X**2, 1)[None, :] - 2 * X @ X.T
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def _chol(Kxx, noise_var):
    n = Kxx.shape[0]
    for jit in JITTERS:
        try:
            return linalg.cholesky(Kxx + (noise_var + jit) * np.eye(n), lower=True), jit
        except linalg.LinAlgError:
            continue
    raise NumericalError("kernel matrix not positive definite after jitter escalation to 1e-6")


@dataclass(frozen=True)
class GprModel:
    length_scale: float
    noise_sd: float
    signal_sd: float
    X: np.ndarray
    y: np.ndarray
    chol: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    jitter: float = 1e-10
    log_ml: float = np.nan
    x_shift: np.ndarray | None = field(default=None, repr=False)
    x_scale: np.ndarray | None = field(default=None, repr=False)
    y_shift: float = 0.0
    y_scale: float = 1.0

    @property
    def input_dim(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class HybridForecast:
    structural: np.ndarray
    correction: np.ndarray
    combined: np.ndarray


def _lml_and_grad(log_theta, X, y, d2):
    ell, sn, sf = np.exp(log_theta)
    n = y.size
    Kf = sf**2 * np.exp(-0.5 * d2 / ell**2)
    try:
        L, jit = _chol(Kf, sn**2)
    except NumericalError:
        return -np.inf, np.zeros(3)
    alpha = linalg.cho_solve((L, True), y)
    lml = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2 * np.pi)
    W = np.outer(alpha, alpha) - linalg.cho_solve((L, True), np.eye(n))
    dK = (Kf * d2 / ell**2, 2 * sn**2 * np.eye(n), 2 * Kf)
    grad = np.array([0.5 * np.sum(W * g) for g in dK])
    return lml, grad


def log_marginal_likelihood(X, y, length_scale, noise_sd, signal_sd, grad: bool = False):
    """Log evidence; with ``grad`` also its gradient in log-hyperparameters ``(ell, sigma_n, signal)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    val, g = _lml_and_grad(np.log([length_scale, noise_sd, signal_sd]), X, y, _sqdist(X))
    return (val, g) if grad else val


def fit_gpr(
    X,
    y,
    optimize_hyper: bool = True,
    seed: int = 0,
    length_scale: float = 1.0,
    noise_sd: float = 0.1,
    signal_sd: float = 1.0,
    standardize: bool = False,
    n_starts: int = 5,
) -> GprModel:
    """Fit an RBF GP.

    Parameters
    ----------
    X : array_like, shape (N, d)
    y : array_like, shape (N,)
    optimize_hyper : bool
        Maximize the log marginal likelihood over ``(ell, sigma_n, signal)``
        with L-BFGS-B in log space from ``n_starts`` starts (the heuristic
        point plus seeded uniform draws inside the bounds). Otherwise the
        supplied hyperparameters are used unchanged.
    standardize : bool
        Centre and scale inputs and targets on the training set; predictions
        are mapped back to the original units.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise DataError("X and y have different numbers of rows")
    if y.size < 1 or X.shape[1] < 1:
        raise DataError("GPR needs at least one training point and one feature")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("GPR inputs must be finite")

    xs, xsc, ys, ysc = None, None, 0.0, 1.0
    if standardize:
        xs = X.mean(axis=0)
        xsc = X.std(axis=0)
        xsc[xsc == 0] = 1.0
        X = (X - xs) / xsc
        ys = float(y.mean())
        ysc = float(y.std()) or 1.0
        y = (y - ys) / ysc

    d2 = _sqdist(X)
    if optimize_hyper:
        if y.size < 2:
            raise DataError("hyperparameter optimization needs N >= 2")
        sy = float(np.std(y)) or 1.0
        pos = d2[np.triu_indices_from(d2, 1)]
        pos = pos[pos > 0]
        dscale = float(np.sqrt(np.median(pos))) if pos.size else 1.0
        bounds = [
            (np.log(1e-2 * dscale), np.log(1e2 * dscale)),
            (np.log(1e-5 * sy), np.log(10 * sy)),
            (np.log(1e-2 * sy), np.log(1e2 * sy)),
        ]
        rng = np.random.default_rng(seed)
        starts = [np.log([dscale, 0.1 * sy, sy])]
        lo = np.array([b[0] for b in bounds])
        hi = np.array([b[1] for b in bounds])
        starts += [rng.uniform(lo, hi) for _ in range(n_starts - 1)]

        def obj(t):
            v, g = _lml_and_grad(t, X, y, d2)
            if not np.isfinite(v):
                return 1e300, np.zeros(3)
            return -v, -g

        best = None
        for t0 in starts:
            res = optimize.minimize(obj, np.clip(t0, lo, hi), jac=True, method="L-BFGS-B", bounds=bounds)
            if best is None or res.fun < best.fun:
                best = res
        length_scale, noise_sd, signal_sd = np.exp(best.x)

    Kf = signal_sd**2 * np.exp(-0.5 * d2 / length_scale**2)
    L, jit = _chol(Kf, noise_sd**2)
    alpha = linalg.cho_solve((L, True), y)
    lml = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * y.size * np.log(2 * np.pi)
    return GprModel(
        float(length_scale), float(noise_sd), float(signal_sd), X, y, L, alpha, jit, float(lml), xs, xsc, ys, ysc
    )


def predict(model: GprModel, x_star):
    """Posterior mean and variance of the latent function at ``x_star``.

    A single ``(d,)`` query returns scalars; ``(m, d)`` returns arrays.
    Variances below zero from rounding are set to zero.
    """
    xq = np.asarray(x_star, dtype=float)
    single = xq.ndim == 1
    xq = np.atleast_2d(xq)
    if xq.shape[1] != model.input_dim:
        raise DataError(f"query has {xq.shape[1]} features, model expects {model.input_dim}")
    if model.x_shift is not None:
        xq = (xq - model.x_shift) / model.x_scale
    ks = rbf_kernel(xq, model.X, model.length_scale, model.signal_sd)
    mean = ks @ model.weights
    v = linalg.solve_triangular(model.chol, ks.T, lower=True)
    var = model.signal_sd**2 - np.sum(v**2, axis=0)
    var = np.maximum(var, 0.0)
    mean = model.y_shift + model.y_scale * mean
    var = var * model.y_scale**2
    return (float(mean[0]), float(var[0])) if single else (mean, var)


# ------------------------------------------------------ residual supervision


def residual_features(resid, k: int, d: int = 3):
    """Training pairs for variable ``k``.

    Row ``t`` holds ``eps_{k,t-1..t-d}`` followed by ``eps_{j,t-1}`` for every
    other ``j``; the target is ``eps_{k,t}``.
    """
    e = np.asarray(getattr(resid, "values", resid), dtype=float)
    T, K = e.shape
    if T <= d:
        raise DataError(f"need more than d={d} residual rows")
    own = np.column_stack([e[d - i : T - i, k] for i in range(1, d + 1)])
    others = np.delete(e[d - 1 : T - 1], k, axis=1)
    return np.hstack([own, others]), e[d:, k]


def residual_query(resid, k: int, d: int = 3) -> np.ndarray:
    """Feature vector for forecasting ``eps_{k,T}`` from the last ``d`` rows."""
    e = np.asarray(getattr(resid, "values", resid), dtype=float)
    if e.shape[0] < d:
        raise DataError(f"residual window shorter than d={d}")
    own = e[::-1][:d, k]
    return np.concatenate([own, np.delete(e[-1], k)])


def fit_residual_gprs(resid, d: int = 3, optimize_hyper: bool = True, seed: int = 0) -> list:
    """One standardized GP per variable on :func:`residual_features`."""
    e = np.asarray(getattr(resid, "values", resid), dtype=float)
    ss = np.random.SeedSequence(seed).spawn(e.shape[1])
    models = []
    for k in range(e.shape[1]):
        X, y = residual_features(e, k, d)
        models.append(
            fit_gpr(X, y, optimize_hyper, seed=int(ss[k].generate_state(1)[0]), standardize=True)
        )
    return models


def hybrid_forecast(base, residual_history, model) -> HybridForecast:
    """Structural forecast plus the GP's predicted residual.

    ``model`` is one :class:`GprModel` with ``residual_history`` its feature
    vector, or a list of per-variable models with ``residual_history`` the
    ``(>= d) x K`` residual window.
    """
    base = np.asarray(base, dtype=float)
    if isinstance(model, GprModel):
        feats = np.asarray(residual_history, dtype=float).ravel()
        if feats.size < model.input_dim:
            raise DataError(f"residual window shorter than model dimension {model.input_dim}")
        corr = np.asarray(predict(model, feats[: model.input_dim])[0])
    else:
        hist = np.asarray(residual_history, dtype=float)
        K = hist.shape[1]
        d = model[0].input_dim - (K - 1)
        corr = np.array([predict(m, residual_query(hist, k, d))[0] for k, m in enumerate(model)])
    return HybridForecast(base, corr, base + corr)
