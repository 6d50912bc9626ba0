"""Reduced-form VAR(p): least squares, lag selection, recursive identification, IRFs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import DataError, NumericalError

__all__ = [
    "VarModel",
    "LagSelectionTable",
    "SvarFactorization",
    "IrfResult",
    "lag_matrix",
    "fit_var",
    "select_lag",
    "cholesky_identify",
    "structural_shocks",
    "impulse_response",
    "forecast",
    "companion",
]


def _values(panel):
    return np.asarray(getattr(panel, "values", panel), dtype=float)


def _names(panel, K):
    names = getattr(panel, "names", None)
    return tuple(names) if names is not None else tuple(f"y{i}" for i in range(K))


def lag_matrix(y: np.ndarray, p: int, start: int | None = None):
    """Regressor matrix ``[1, y_{t-1}, ..., y_{t-p}]`` for rows ``t >= start``.

    ``start`` defaults to ``p``; a larger value trims the sample so that
    several lag orders share the same rows.
    """
    start = p if start is None else start
    T = y.shape[0]
    cols = [np.ones((T - start, 1))]
    cols += [y[start - i : T - i] for i in range(1, p + 1)]
    return y[start:], np.hstack(cols)


@dataclass(frozen=True)
class VarModel:
    """Estimated VAR(p).

    ``A[i]`` multiplies ``y_{t-i-1}``; ``Sigma`` divides the residual cross
    moment by ``T - p - K p - 1``.
    """

    p: int
    c: np.ndarray
    A: np.ndarray
    Sigma: np.ndarray
    residuals: np.ndarray
    stderr: np.ndarray
    names: tuple

    @property
    def K(self) -> int:
        return self.c.shape[0]

    @property
    def coef(self) -> np.ndarray:
        """Stacked (1 + K p) x K coefficient matrix, intercept first."""
        return np.vstack([self.c[None, :]] + [a.T for a in self.A])

    def is_stable(self) -> bool:
        return bool(np.max(np.abs(np.linalg.eigvals(companion(self)))) < 1.0)


@dataclass(frozen=True)
class LagSelectionTable:
    lags: np.ndarray
    aic: np.ndarray
    hq: np.ndarray
    sc: np.ndarray
    fpe: np.ndarray
    nobs: int

    @property
    def chosen(self) -> dict:
        return {
            name: int(self.lags[np.argmin(getattr(self, name))])
            for name in ("aic", "hq", "sc", "fpe")
        }


@dataclass(frozen=True)
class SvarFactorization:
    """Lower-triangular impact matrix ``P`` (``P P' = Sigma``) in ``ordering``."""

    impact: np.ndarray
    ordering: tuple
    names: tuple


@dataclass(frozen=True)
class IrfResult:
    """``responses[h, i, j]``: response of variable ``i`` to a one-s.d. shock ``j``."""

    horizons: np.ndarray
    responses: np.ndarray
    names: tuple


def fit_var(panel, p: int) -> VarModel:
    y = _values(panel)
    T, K = y.shape
    if p < 1:
        raise ValueError("lag order must be at least 1")
    dof = T - p - K * p - 1
    if dof <= 0:
        raise DataError(f"VAR({p}) with K={K} needs more than {K * p + 1 + p} observations")
    Y, Z = lag_matrix(y, p)
    if np.linalg.matrix_rank(Z) < Z.shape[1]:
        raise NumericalError("collinear regressors in VAR design")
    ZtZ_inv = np.linalg.inv(Z.T @ Z)
    B = ZtZ_inv @ Z.T @ Y
    E = Y - Z @ B
    Sigma = E.T @ E / dof
    Sigma = (Sigma + Sigma.T) / 2
    stderr = np.sqrt(np.outer(np.diag(ZtZ_inv), np.diag(Sigma)))
    A = np.stack([B[1 + i * K : 1 + (i + 1) * K].T for i in range(p)])
    return VarModel(p, B[0].copy(), A, Sigma, E, stderr, _names(panel, K))


def select_lag(panel, max_lag: int) -> LagSelectionTable:
    """Information criteria for lags ``1..max_lag`` on a common sample.

    All orders use rows ``max_lag..T``; the residual covariance is the ML
    estimate (divisor ``n``) and the penalties count the ``p K^2`` slope
    coefficients.
    """
    y = _values(panel)
    T, K = y.shape
    n = T - max_lag
    if n - K * max_lag - 1 <= 0:
        raise DataError(f"max_lag={max_lag} is infeasible for {T} observations")
    lags = np.arange(1, max_lag + 1)
    out = {k: np.empty(max_lag) for k in ("aic", "hq", "sc", "fpe")}
    for j, p in enumerate(lags):
        Y, Z = lag_matrix(y, p, start=max_lag)
        B, *_ = np.linalg.lstsq(Z, Y, rcond=None)
        E = Y - Z @ B
        sign, logdet = np.linalg.slogdet(E.T @ E / n)
        if sign <= 0:
            raise NumericalError(f"singular residual covariance at lag {p}")
        m = p * K * K
        out["aic"][j] = logdet + 2.0 * m / n
        out["hq"][j] = logdet + 2.0 * np.log(np.log(n)) * m / n
        out["sc"][j] = logdet + np.log(n) * m / n
        out["fpe"][j] = ((n + p * K) / (n - p * K)) ** K * np.exp(logdet)
    return LagSelectionTable(lags, nobs=n, **out)


def _ordering_index(model: VarModel, ordering) -> list:
    if ordering is None:
        return list(range(model.K))
    idx = [model.names.index(o) if isinstance(o, str) else int(o) for o in ordering]
    if sorted(idx) != list(range(model.K)):
        raise ValueError("ordering must be a permutation of the model variables")
    return idx


def cholesky_identify(model: VarModel, ordering: Sequence | None = None) -> SvarFactorization:
    """Recursive identification: lower Cholesky factor of the permuted Sigma."""
    idx = _ordering_index(model, ordering)
    S = model.Sigma[np.ix_(idx, idx)]
    try:
        P = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("Sigma is not positive definite") from exc
    if np.min(np.diag(P)) <= 1e-12 * np.sqrt(np.max(np.diag(S))):
        raise NumericalError("Sigma is not positive definite")
    return SvarFactorization(P, tuple(idx), tuple(model.names[i] for i in idx))


def structural_shocks(model: VarModel, fact: SvarFactorization) -> np.ndarray:
    """``u_t = P^-1 eps_t`` with residual columns in the factor's ordering."""
    eps = model.residuals[:, list(fact.ordering)]
    return np.linalg.solve(fact.impact, eps.T).T


def companion(model: VarModel, ordering=None) -> np.ndarray:
    K, p = model.K, model.p
    idx = list(range(K)) if ordering is None else list(ordering)
    C = np.zeros((K * p, K * p))
    for i in range(p):
        C[:K, i * K : (i + 1) * K] = model.A[i][np.ix_(idx, idx)]
    if p > 1:
        C[K:, :-K] = np.eye(K * (p - 1))
    return C


def impulse_response(model: VarModel, fact: SvarFactorization, H: int) -> IrfResult:
    """Orthogonalized IRFs ``Psi_h P`` for ``h = 0..H``."""
    if H < 0:
        raise ValueError("horizon must be non-negative")
    K = model.K
    C = companion(model, fact.ordering)
    out = np.empty((H + 1, K, K))
    out[0] = fact.impact
    M = np.eye(C.shape[0])
    for h in range(1, H + 1):
        M = C @ M
        out[h] = M[:K, :K] @ fact.impact
    return IrfResult(np.arange(H + 1), out, fact.names)


def forecast(model: VarModel, history, h: int = 1) -> np.ndarray:
    """Iterated conditional-mean forecasts, ``h x K``.

    ``history`` holds at least ``p`` rows, oldest first.
    """
    hist = np.asarray(history, dtype=float)
    if hist.ndim == 1:
        hist = hist[None, :]
    if hist.shape[0] < model.p:
        raise DataError(f"forecast needs at least p={model.p} rows of history")
    window = list(hist[-model.p :])
    out = np.empty((h, model.K))
    for s in range(h):
        y = model.c.copy()
        for i in range(model.p):
            y = y + model.A[i] @ window[-1 - i]
        out[s] = y
        window.append(y)
    return out
