"""Rolling one-step-ahead evaluation, RMSE tables, model comparison and plot data.

Each out-of-sample step re-estimates the chosen mean model (VAR or TVP) on
the data before it, forms a one-step forecast and, for layered models, adds a
conditional-mean correction:

* GPR layers add the per-variable GP prediction of the next residual.
* Dependence layers (DCC, ADCC, t-copula DCC, Archimedean mixture) predict
  the next standardized residual by projecting it on the current one,
  ``z_hat = G1 R^-1 z_T`` with ``G1`` the sample lag-one cross moment of
  ``z`` and ``R`` the layer's correlation matrix at ``T``. The correction is
  ``sigma_{T+1} * z_hat`` with ``sigma_{T+1}`` from the GARCH marginals.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy import stats

from . import copulas, garch, gpr
from .config import RunConfig, int_seed
from .data import ReturnPanel, load_panel, split, to_log_returns
from .diagnostics import CusumPath, TestReport, welch_t_test
from .exceptions import ConfigError, DataError, MacroEnergyError
from .tvp import RegimeIrfSet, TvpConfig, fit_tvp
from .var import IrfResult, fit_var, forecast

__all__ = [
    "StepContext",
    "EvaluationTable",
    "mean_model_step",
    "dependence_correction",
    "builtin_forecaster",
    "load_returns",
    "rolling_evaluate",
    "compare_models",
    "emit_plotdata",
    "load_plotdata",
    "PLOT_KINDS",
]

logger = logging.getLogger(__name__)

PLOT_KINDS = ("irf", "rmse-bars", "cusum", "rt-path")


def _fmt(x) -> str:
    return repr(float(x))


@dataclass
class StepContext:
    """What a forecaster may see at one out-of-sample step."""

    index: int
    date: str
    names: tuple
    config: RunConfig | None
    cache: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EvaluationTable:
    models: tuple
    names: tuple
    rmse: np.ndarray
    steps: np.ndarray
    failed: np.ndarray
    dates: tuple = ()
    actual: np.ndarray | None = None
    forecasts: np.ndarray | None = None
    messages: Mapping = field(default_factory=dict, compare=False)

    @property
    def mean_rmse(self) -> np.ndarray:
        out = np.full(self.rmse.shape[0], np.nan)
        ok = np.isfinite(self.rmse).any(axis=1)
        out[ok] = np.nanmean(self.rmse[ok], axis=1)
        return out

    @property
    def complete(self) -> np.ndarray:
        return self.failed == 0

    def row(self, model: str) -> np.ndarray:
        return self.rmse[self.models.index(model)]

    @classmethod
    def from_rmse(cls, models, names, rmse) -> "EvaluationTable":
        rmse = np.asarray(rmse, dtype=float)
        if rmse.shape != (len(models), len(names)):
            raise DataError("rmse must be models x variables")
        if np.any(rmse < 0):
            raise DataError("RMSE values must be non-negative")
        M = len(models)
        return cls(tuple(models), tuple(names), rmse, np.zeros(M, int), np.zeros(M, int))

    @classmethod
    def read_csv(cls, path) -> "EvaluationTable":
        """Inverse of :meth:`to_csv` (RMSE columns, step and failure counts)."""
        try:
            rows = list(csv.reader(io.StringIO(Path(path).read_text(encoding="utf-8"))))
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
        if not rows or rows[0][0] != "model":
            raise DataError(f"{path} is not an RMSE table")
        header = rows[0]
        nK = header.index("mean_rmse") - 1 if "mean_rmse" in header else len(header) - 1
        names = tuple(header[1 : 1 + nK])
        body = rows[1:]
        try:
            rmse = np.array([[float(v) for v in r[1 : 1 + nK]] for r in body])
            steps = np.array([int(r[2 + nK]) if len(r) > 2 + nK else 0 for r in body])
            failed = np.array([int(r[3 + nK]) if len(r) > 3 + nK else 0 for r in body])
        except ValueError as exc:
            raise DataError(f"malformed RMSE table {path}: {exc}") from exc
        return cls(tuple(r[0] for r in body), names, rmse.reshape(len(body), nK), steps, failed)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", *self.names, "mean_rmse", "steps", "failed", "complete"])
        for i, m in enumerate(self.models):
            w.writerow(
                [m, *(_fmt(v) for v in self.rmse[i]), _fmt(self.mean_rmse[i]), int(self.steps[i]),
                 int(self.failed[i]), str(bool(self.complete[i])).lower()]
            )
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    def forecasts_csv(self, path=None) -> str:
        """Long format: date, model, variable, forecast, actual."""
        if self.forecasts is None:
            raise DataError("table carries no forecasts")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date", "model", "variable", "forecast", "actual"])
        for i, m in enumerate(self.models):
            for s, d in enumerate(self.dates):
                for k, n in enumerate(self.names):
                    w.writerow([d, m, n, _fmt(self.forecasts[i, s, k]), _fmt(self.actual[s, k])])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


# ------------------------------------------------------------- mean models


def mean_model_step(kind: str, train: np.ndarray, p: int, tvp_config: TvpConfig):
    """Fit ``kind`` on ``train`` and return ``(one-step forecast, residuals)``."""
    if kind == "VAR":
        model = fit_var(train, p)
        return forecast(model, train[-p:], 1)[0], model.residuals
    if kind == "TVP":
        model = fit_tvp(train, p, tvp_config)
        x = np.concatenate([[1.0], train[::-1][:p].ravel()])
        return x @ model.coef_path[-1], model.residuals
    raise ConfigError(f"unknown mean model {kind!r}")


def _near_pd_corr(C: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    w, V = np.linalg.eigh((C + C.T) / 2)
    if w[0] >= floor:
        return C
    C = (V * np.maximum(w, floor)) @ V.T
    d = np.sqrt(np.diag(C))
    return C / np.outer(d, d)


def _mixture_correlation(resid: np.ndarray, target: int, seed: int) -> np.ndarray:
    """Correlation from rank dependence; pairs with ``target`` use the fitted mixture's tau."""
    K = resid.shape[1]
    R = np.eye(K)
    U = copulas.pseudo_observations(resid)
    for i in range(K):
        for j in range(i + 1, K):
            if target in (i, j):
                fit = copulas.fit_mixture(U[:, [i, j]], restarts=3, seed=seed)
                tau = float(sum(w * c.tau for w, c in zip(fit.params.weights, fit.params.components)))
            else:
                tau = float(stats.kendalltau(resid[:, i], resid[:, j]).statistic)
            R[i, j] = R[j, i] = np.sin(np.pi * tau / 2)
    return _near_pd_corr(R)


def dependence_correction(resid: np.ndarray, layer: str, seed: int, joint: str = "student_t",
                          target: int | None = None, fits=None) -> np.ndarray:
    """Mean correction for the next residual implied by a dependence layer.

    ``fits`` reuses already estimated GARCH marginals for ``resid``.
    """
    e = np.asarray(resid, dtype=float)
    K = e.shape[1]
    if fits is None:
        ss = np.random.SeedSequence(seed).spawn(K)
        fits = [garch.fit_garch_t(e[:, k], seed=int(ss[k].generate_state(1)[0])) for k in range(K)]
    h = np.column_stack([f.variance for f in fits])
    z = e / np.sqrt(h)
    om = np.array([f.params.omega for f in fits])
    al = np.array([f.params.alpha for f in fits])
    be = np.array([f.params.beta for f in fits])
    sigma_next = np.sqrt(om + al * e[-1] ** 2 + be * h[-1])
    if layer in ("DCC", "ADCC"):
        _, path = garch.fit_dcc(z, layer == "ADCC", joint, seed=seed)
        R = path.R[-1]
    elif layer == "tcopula":
        u = garch.pit_panel(e, fits, "parametric-t")
        _, path = garch.fit_t_copula_dcc(u, seed=seed)
        R = path.R[-1]
    elif layer == "copula-mix":
        R = _mixture_correlation(e, K - 1 if target is None else target, seed)
    else:
        raise ConfigError(f"unknown dependence layer {layer!r}")
    G1 = z[1:].T @ z[:-1] / (z.shape[0] - 1)
    z_hat = G1 @ np.linalg.solve(R, z[-1])
    return sigma_next * z_hat


def _garch_fits(ctx: StepContext, mean: str, resid: np.ndarray):
    key = ("garch", mean, ctx.index)
    if key not in ctx.cache:
        K = resid.shape[1]
        seed = ctx.config.seed if ctx.config is not None else 0
        ctx.cache[key] = [
            garch.fit_garch_t(resid[:, k], seed=int_seed(seed, "garch", mean, ctx.date, k)) for k in range(K)
        ]
    return ctx.cache[key]


def builtin_forecaster(name: str, config: RunConfig) -> Callable:
    """Forecaster for one model of the configured list."""
    mean, _, layer = name.partition("-")

    def run(history: np.ndarray, ctx: StepContext) -> np.ndarray:
        key = ("mean", mean, ctx.index)
        if key not in ctx.cache:
            ctx.cache[key] = mean_model_step(mean, history, config.p, config.tvp)
        base, resid = ctx.cache[key]
        if not layer:
            return base
        seed = int_seed(config.seed, name, ctx.date)
        if layer == "GPR":
            models = gpr.fit_residual_gprs(resid, config.gpr_lags, config.gpr_optimize, seed)
            return gpr.hybrid_forecast(base, resid, models).combined
        target = None
        if config.copula_target is not None:
            if config.copula_target not in ctx.names:
                raise ConfigError(f"copula_target {config.copula_target!r} not in panel")
            target = ctx.names.index(config.copula_target)
        fits = _garch_fits(ctx, mean, resid)
        return base + dependence_correction(resid, layer, seed, config.dcc_joint, target, fits)

    return run


# ------------------------------------------------------------ evaluation


def load_returns(config: RunConfig) -> ReturnPanel:
    if not config.data:
        raise ConfigError("config has no data path")
    panel = load_panel(config.data, config.date_column, config.on_missing)
    if config.ordering:
        missing = [n for n in config.ordering if n not in panel.names]
        if missing:
            raise ConfigError(f"ordering names not in panel: {', '.join(missing)}")
        if len(config.ordering) != panel.K:
            raise ConfigError("ordering must list every panel variable")
        panel = panel.reorder(config.ordering)
    return to_log_returns(panel)


_FAILURES = (MacroEnergyError, np.linalg.LinAlgError, FloatingPointError, ValueError, ArithmeticError)


def rolling_evaluate(
    config: RunConfig,
    returns: ReturnPanel | None = None,
    forecasters: Mapping[str, Callable] | None = None,
    progress: Callable | None = None,
) -> EvaluationTable:
    """One-step-ahead forecasts over the out-of-sample window.

    Parameters
    ----------
    config : RunConfig
        ``boundary`` is the first out-of-sample month. ``window="fixed"``
        keeps the last ``window_length`` rows (default: the in-sample size).
    returns : ReturnPanel, optional
        Loaded from ``config.data`` when omitted.
    forecasters : mapping, optional
        ``name -> f(history, ctx)`` returning a length-K forecast. When given,
        these replace the configured model list.

    Notes
    -----
    A forecaster that raises at a step gets a NaN forecast there; the table
    counts the failure and its RMSE uses the remaining steps only.
    """
    returns = load_returns(config) if returns is None else returns
    if not config.boundary:
        raise ConfigError("config has no split boundary")
    sp = split(returns, config.boundary)
    if forecasters is None:
        forecasters = {m: builtin_forecaster(m, config) for m in config.models}
    models = tuple(forecasters)
    y = returns.values
    oos = list(sp.out_of_sample)
    S, K = len(oos), returns.K
    fc = np.full((len(models), S, K), np.nan)
    failed = np.zeros((len(models), S), dtype=bool)
    messages: dict = {}
    width = config.window_length or sp.boundary
    dates = tuple(str(returns.dates[t]) for t in oos)
    for s, t in enumerate(oos):
        start = 0 if config.window == "expanding" else max(0, t - width)
        history = y[start:t]
        ctx = StepContext(t, dates[s], returns.names, config)
        for i, m in enumerate(models):
            try:
                out = np.asarray(forecasters[m](history, ctx), dtype=float).reshape(K)
                if not np.all(np.isfinite(out)):
                    raise FloatingPointError("non-finite forecast")
                fc[i, s] = out
            except _FAILURES as exc:
                failed[i, s] = True
                messages[(m, dates[s])] = f"{type(exc).__name__}: {exc}"
                logger.warning("model %s failed at %s: %s", m, dates[s], exc)
        if progress is not None:
            progress(s + 1, S)
    actual = y[oos]
    err2 = (fc - actual[None]) ** 2
    ok = (~failed).sum(axis=1)
    rmse = np.full((len(models), K), np.nan) if S else np.zeros((len(models), K))
    for i in np.flatnonzero(ok):
        rmse[i] = np.sqrt(np.nanmean(err2[i], axis=0))
    return EvaluationTable(models, returns.names, rmse, ok, failed.sum(axis=1), dates, actual, fc, messages)


def compare_models(table: EvaluationTable, group_a, group_b) -> TestReport:
    """Welch test between the pooled per-variable RMSEs of two model groups."""
    group_a, group_b = list(group_a), list(group_b)
    if not group_a or not group_b:
        raise ConfigError("both model groups must be non-empty")
    unknown = [m for m in group_a + group_b if m not in table.models]
    if unknown:
        raise ConfigError(f"models not in table: {', '.join(unknown)}")
    a = np.concatenate([table.row(m) for m in group_a])
    b = np.concatenate([table.row(m) for m in group_b])
    rep = welch_t_test(a[np.isfinite(a)], b[np.isfinite(b)])
    rep.details.update(group_a=group_a, group_b=group_b)
    return rep


# -------------------------------------------------------------- plot data


def _irf_rows(results):
    if isinstance(results, IrfResult):
        items = [("constant", results)]
    elif isinstance(results, RegimeIrfSet):
        items = list(zip(results.regimes, results.irfs))
    elif isinstance(results, Mapping):
        items = list(results.items())
    else:
        raise DataError("irf plot data needs an IrfResult, RegimeIrfSet or mapping")
    for regime, irf in items:
        H1, K, _ = irf.responses.shape
        for j in range(K):
            for i in range(K):
                for h in range(H1):
                    yield [irf.names[j], irf.names[i], int(irf.horizons[h]), regime, _fmt(irf.responses[h, i, j])]


def _cusum_rows(results):
    items = [("y", results)] if isinstance(results, CusumPath) else list(results.items())
    for eq, path in items:
        for t, s, u, l in zip(path.t, path.statistic_path, path.upper_band, path.lower_band):
            yield [eq, int(t), _fmt(s), _fmt(u), _fmt(l)]


def _rt_rows(results):
    if isinstance(results, tuple):
        path, names, dates = (list(results) + [None, None])[:3]
    else:
        path, names, dates = results, None, None
    T, K, _ = path.R.shape
    names = names or [f"y{i}" for i in range(K)]
    dates = dates if dates is not None else range(T)
    for t, d in enumerate(dates):
        for i in range(K):
            for j in range(i + 1, K):
                yield [str(d), names[i], names[j], _fmt(path.R[t, i, j])]


_HEADERS = {
    "irf": ["shock", "response", "horizon", "regime", "value"],
    "rmse-bars": ["model", "variable", "rmse"],
    "cusum": ["equation", "t", "statistic", "upper", "lower"],
    "rt-path": ["date", "var_i", "var_j", "value"],
}


def emit_plotdata(results, kind: str, path=None) -> str:
    """Long-format CSV for plotting; identical input gives identical bytes.

    ``rt-path`` accepts a :class:`CondCovPath` or ``(path, names, dates)``;
    ``cusum`` accepts one :class:`CusumPath` or a mapping of equation names
    to paths.
    """
    if kind not in PLOT_KINDS:
        raise ConfigError(f"unknown plot kind {kind!r}; choose from {', '.join(PLOT_KINDS)}")
    if results is None:
        raise DataError("no results to emit")
    if kind == "irf":
        rows = _irf_rows(results)
    elif kind == "rmse-bars":
        rows = ([m, n, _fmt(results.rmse[i, k])] for i, m in enumerate(results.models) for k, n in enumerate(results.names))
    elif kind == "cusum":
        rows = _cusum_rows(results)
    else:
        rows = _rt_rows(results)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_HEADERS[kind])
    w.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def load_plotdata(source, kind: str) -> dict:
    """Read plot CSV (a path or the CSV text) back into float arrays keyed by group."""
    if kind not in PLOT_KINDS:
        raise ConfigError(f"unknown plot kind {kind!r}")
    text = str(source) if "\n" in str(source) else Path(source).read_text(encoding="utf-8")
    rows = list(csv.DictReader(io.StringIO(text)))
    if kind == "cusum":
        out: dict = {}
        for r in rows:
            d = out.setdefault(r["equation"], {"t": [], "statistic": [], "upper": [], "lower": []})
            d["t"].append(int(r["t"]))
            for c in ("statistic", "upper", "lower"):
                d[c].append(float(r[c]))
        return {k: {c: np.array(v) for c, v in d.items()} for k, d in out.items()}
    if kind == "irf":
        out = {}
        for r in rows:
            out.setdefault((r["regime"], r["shock"], r["response"]), []).append(float(r["value"]))
        return {k: np.array(v) for k, v in out.items()}
    if kind == "rmse-bars":
        return {(r["model"], r["variable"]): float(r["rmse"]) for r in rows}
    out = {}
    for r in rows:
        out.setdefault((r["var_i"], r["var_j"]), []).append(float(r["value"]))
    return {k: np.array(v) for k, v in out.items()}
