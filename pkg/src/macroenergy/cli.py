"""Command-line entry point: ``macroenergy <subcommand> [options]``.

Every subcommand reads the same flat config (``--config``) and accepts any
config key as a ``--key value`` flag, which takes precedence. Outputs go to
``--out`` together with a ``run.json`` summary.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, copulas, diagnostics, garch, gpr
from .config import ALL_MODELS, RunConfig, int_seed, load_config
from .data import describe, load_panel, split, to_log_returns
from .evaluation import (
    PLOT_KINDS,
    EvaluationTable,
    compare_models,
    emit_plotdata,
    load_returns,
    rolling_evaluate,
)
from .exceptions import ConfigError, MacroEnergyError
from .tvp import fit_tvp, regime_irfs
from .var import cholesky_identify, fit_var, impulse_response, lag_matrix, select_lag

logger = logging.getLogger("macroenergy")

_CONFIG_KEYS = [f for f in dataclasses.fields(RunConfig) if f.name not in ("extra",)]


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def _returns_and_split(cfg: RunConfig):
    rp = load_returns(cfg)
    if cfg.boundary:
        sp = split(rp, cfg.boundary)
        return rp, rp.rows(0, sp.boundary), sp
    return rp, rp, None


def _mean_residuals(cfg: RunConfig, ins, mean: str):
    if mean == "VAR":
        return fit_var(ins, cfg.p).residuals
    return fit_tvp(ins, cfg.p, cfg.tvp).residuals


# ------------------------------------------------------------ subcommands


def cmd_ingest(cfg, args, out: Path) -> dict:
    panel = load_panel(cfg.data, cfg.date_column, cfg.on_missing)
    if cfg.ordering:
        panel = panel.reorder(cfg.ordering)
    rp = to_log_returns(panel)
    describe(panel).to_csv(out / "describe_levels.csv")
    describe(rp).to_csv(out / "describe_returns.csv")
    _write_csv(
        out / "returns.csv",
        ["date", *rp.names],
        ([str(d), *(_fmt(v) for v in row)] for d, row in zip(rp.dates, rp.values)),
    )
    info = {"T_levels": panel.T, "K": panel.K, "names": list(panel.names), "rejected_rows": list(panel.rejected_rows)}
    if cfg.boundary:
        sp = split(rp, cfg.boundary)
        info.update(in_sample=sp.boundary, out_of_sample=sp.n_rows - sp.boundary)
    return info


def cmd_diagnose(cfg, args, out: Path) -> dict:
    panel = load_panel(cfg.data, cfg.date_column, cfg.on_missing)
    if cfg.ordering:
        panel = panel.reorder(cfg.ordering)
    rp, ins, _ = _returns_and_split(cfg)
    reports = []
    for k, name in enumerate(panel.names):
        r = diagnostics.adf_test(panel.values[:, k], "c", args.adf_max_lag)
        reports.append(dataclasses.replace(r, name=f"adf_levels[{name}]"))
        r = diagnostics.adf_test(rp.values[:, k], "c", args.adf_max_lag)
        reports.append(dataclasses.replace(r, name=f"adf_returns[{name}]"))
    for r in diagnostics.johansen_trace(panel.values, args.johansen_lag):
        reports.append(r)
    model = fit_var(ins, cfg.p)
    e = model.residuals
    lags = args.portmanteau_lags
    reports.append(diagnostics.portmanteau(e, lags, cfg.p))
    for mode in ("joint", "skewness_only", "kurtosis_only"):
        reports.append(diagnostics.jarque_bera(e, mode))
    for k, name in enumerate(rp.names):
        r = diagnostics.arch_lm(e[:, k], 12)
        reports.append(dataclasses.replace(r, name=f"arch_lm[{name}]"))
    reports.append(diagnostics.multivariate_arch_q(e, 12))
    Y, X = lag_matrix(ins.values, cfg.p)
    cus = {}
    for k, name in enumerate(rp.names):
        path = diagnostics.cusum(Y[:, k], X)
        cus[name] = path
        reports.append(
            diagnostics.TestReport(f"cusum[{name}]", float(np.max(np.abs(path.statistic_path))), np.nan,
                                   np.nan, path.crossed, {})
        )
    emit_plotdata(cus, "cusum", out / "cusum.csv")
    _write_csv(
        out / "diagnostics.csv",
        ["name", "statistic", "df", "p_value", "reject"],
        ([r.name, _fmt(r.statistic), _fmt(r.df), _fmt(r.p_value), str(bool(r.reject_at_5pct)).lower()] for r in reports),
    )
    tab = select_lag(ins, cfg.max_lag)
    _write_csv(
        out / "lag_selection.csv",
        ["lag", "aic", "hq", "sc", "fpe"],
        ([int(l), _fmt(a), _fmt(h), _fmt(s), _fmt(f)] for l, a, h, s, f in zip(tab.lags, tab.aic, tab.hq, tab.sc, tab.fpe)),
    )
    return {"tests": len(reports), "lag_chosen": tab.chosen}


def _irf_csv(path, irf):
    K = irf.responses.shape[1]
    rows = (
        [irf.names[j], irf.names[i], int(h), _fmt(irf.responses[h, i, j])]
        for j in range(K)
        for i in range(K)
        for h in irf.horizons
    )
    _write_csv(path, ["shock", "response_variable", "horizon", "value"], rows)


def cmd_fit_var(cfg, args, out: Path) -> dict:
    _, ins, _ = _returns_and_split(cfg)
    model = fit_var(ins, cfg.p)
    names = model.names
    _write_csv(out / "var_intercept.csv", ["equation", "value"], ([n, _fmt(c)] for n, c in zip(names, model.c)))
    for i, A in enumerate(model.A, 1):
        _write_csv(out / f"var_A{i}.csv", ["equation", *names], ([n, *(_fmt(v) for v in row)] for n, row in zip(names, A)))
    _write_csv(out / "var_sigma.csv", ["", *names], ([n, *(_fmt(v) for v in row)] for n, row in zip(names, model.Sigma)))
    fact = cholesky_identify(model)
    irf = impulse_response(model, fact, cfg.irf_horizon)
    _irf_csv(out / "irf.csv", irf)
    return {"p": model.p, "stable": model.is_stable(), "nobs": int(model.residuals.shape[0])}


def cmd_fit_tvp(cfg, args, out: Path) -> dict:
    _, ins, _ = _returns_and_split(cfg)
    model = fit_tvp(ins, cfg.p, cfg.tvp)
    K = model.K
    regs = ["const"] + [f"{n}.L{l}" for l in range(1, cfg.p + 1) for n in model.names]
    rows = (
        [str(d), model.names[k], regs[r], _fmt(model.coef_path[t, r, k])]
        for t, d in enumerate(model.dates)
        for k in range(K)
        for r in range(len(regs))
    )
    _write_csv(out / "tvp_coef_path.csv", ["date", "equation", "regressor", "value"], rows)
    _write_csv(
        out / "tvp_residuals.csv",
        ["date", *model.names],
        ([str(d), *(_fmt(v) for v in row)] for d, row in zip(model.dates, model.residuals)),
    )
    reg = regime_irfs(model, cfg.irf_horizon)
    for name, irf in zip(reg.regimes, reg.irfs):
        _irf_csv(out / f"irf_{name}.csv", irf)
    return {"filtered_steps": int(model.residuals.shape[0]), "regime_dates": dict(zip(reg.regimes, reg.dates))}


def cmd_fit_dcc(cfg, args, out: Path) -> dict:
    _, ins, _ = _returns_and_split(cfg)
    e = _mean_residuals(cfg, ins, args.mean)
    joint = {"t": "student_t", "gaussian": "gaussian", "tcopula": "tcopula"}[args.joint]
    fits, params, path = garch.fit_garch_dcc(e, args.asymmetric, joint, seed=int_seed(cfg.seed, "fit-dcc", args.mean))
    rows = []
    for n, f in zip(ins.names, fits):
        rows += [[f"{n}.omega", _fmt(f.params.omega)], [f"{n}.alpha1", _fmt(f.params.alpha)],
                 [f"{n}.beta1", _fmt(f.params.beta)], [f"{n}.shape", _fmt(f.params.nu)]]
    rows += [["[Joint]dccA1", _fmt(params.a)], ["[Joint]dccB1", _fmt(params.b)]]
    if args.asymmetric:
        rows.append(["[Joint]dccG1", _fmt(params.g)])
    if params.nu_joint is not None:
        rows.append(["[Joint]mshape", _fmt(params.nu_joint)])
    rows.append(["loglik", _fmt(params.loglik)])
    _write_csv(out / "dcc_params.csv", ["parameter", "value"], rows)
    n = path.R.shape[0]
    emit_plotdata((path, list(ins.names), [str(d) for d in ins.dates[-n:]]), "rt-path", out / "rt_path.csv")
    return {"a": params.a, "b": params.b, "g": params.g, "nu_joint": params.nu_joint, "converged": params.converged}


def _copula_pairs(cfg, names, pairwise: bool):
    K = len(names)
    if not pairwise:
        return [tuple(range(K))]
    target = names.index(cfg.copula_target) if cfg.copula_target else K - 1
    return [(j, target) for j in range(K) if j != target]


def cmd_fit_copula(cfg, args, out: Path) -> dict:
    _, ins, _ = _returns_and_split(cfg)
    e = _mean_residuals(cfg, ins, args.mean)
    U = garch.pit_panel(e, method="empirical").u
    rows = []
    for pair in _copula_pairs(cfg, ins.names, not args.full):
        label = "-".join(ins.names[i] for i in pair)
        Up = U[:, list(pair)]
        fams = copulas.FAMILIES if args.family in ("all", "mixture") else (args.family,)
        for fam in fams:
            if fam == "frank" and len(pair) > 2:
                continue
            f = copulas.fit_single(Up, fam)
            rows.append([label, fam, _fmt(f.spec.theta), "1.0", _fmt(f.loglik)])
        if args.family in ("all", "mixture") and len(pair) == 2:
            m = copulas.fit_mixture(Up, seed=int_seed(cfg.seed, "fit-copula", label))
            for c, w in zip(m.params.components, m.params.weights):
                rows.append([label, f"mixture.{c.family}", _fmt(c.theta), _fmt(w), _fmt(m.loglik)])
    _write_csv(out / "copula_params.csv", ["pair", "family", "theta", "weight", "loglik"], rows)
    return {"rows": len(rows)}


def cmd_gof(cfg, args, out: Path) -> dict:
    _, ins, _ = _returns_and_split(cfg)
    e = _mean_residuals(cfg, ins, args.mean)
    U = garch.pit_panel(e, method="empirical").u
    rows = []
    fams = copulas.FAMILIES if args.family == "all" else (args.family,)
    for pair in _copula_pairs(cfg, ins.names, not args.full):
        label = "-".join(ins.names[i] for i in pair)
        Up = U[:, list(pair)]
        for fam in fams:
            if fam == "frank" and len(pair) > 2:
                continue
            spec = copulas.fit_single(Up, fam).spec
            res = copulas.gof_bootstrap(Up, spec, cfg.bootstrap_B, int_seed(cfg.seed, "gof", label, fam), cfg.gof_tail)
            for stat, p, kind in ((res.statistic_global, res.p_global, "Sn"), (res.statistic_tail, res.p_tail, "SnC")):
                rows.append([f"{args.mean}:{label}", fam, kind, _fmt(stat), _fmt(p), "reject" if p < 0.05 else "accept"])
    _write_csv(out / "gof.csv", ["model", "copula", "statistic_kind", "statistic", "p_value", "decision"], rows)
    return {"rows": len(rows), "B": cfg.bootstrap_B}


def cmd_fit_gpr(cfg, args, out: Path) -> dict:
    _, ins, _ = _returns_and_split(cfg)
    e = _mean_residuals(cfg, ins, args.mean)
    d = args.lags if args.lags is not None else cfg.gpr_lags
    optimize = cfg.gpr_optimize and not args.no_opt
    models = gpr.fit_residual_gprs(e, d, optimize, int_seed(cfg.seed, "fit-gpr", args.mean))
    names = ins.names
    _write_csv(
        out / "gpr_hyper.csv",
        ["variable", "length_scale", "noise_sd", "signal_sd", "log_ml"],
        ([n, _fmt(m.length_scale), _fmt(m.noise_sd), _fmt(m.signal_sd), _fmt(m.log_ml)] for n, m in zip(names, models)),
    )
    rows = []
    for k, (n, m) in enumerate(zip(names, models)):
        X, _ = gpr.residual_features(e, k, d)
        mu, _ = gpr.predict(m, X)
        rows += [[int(t + d), n, _fmt(v)] for t, v in enumerate(mu)]
    _write_csv(out / "gpr_corrections.csv", ["step", "variable", "correction"], rows)
    return {"lags": d, "optimized": optimize}


def cmd_evaluate(cfg, args, out: Path) -> dict:
    t0 = time.time()
    table = rolling_evaluate(cfg, progress=lambda s, S: logger.info("step %d/%d (%.1fs)", s, S, time.time() - t0))
    table.to_csv(out / "rmse.csv")
    table.forecasts_csv(out / "forecasts.csv")
    return {
        "models": {
            m: {"complete": bool(table.complete[i]), "steps": int(table.steps[i]), "failed": int(table.failed[i])}
            for i, m in enumerate(table.models)
        },
        "failures": {f"{m}@{d}": msg for (m, d), msg in sorted(table.messages.items())},
    }


def cmd_compare(cfg, args, out: Path) -> dict:
    table = EvaluationTable.read_csv(args.table)
    rep = compare_models(table, args.group_a.split(","), args.group_b.split(","))
    _write_csv(
        out / "compare.csv",
        ["name", "statistic", "df", "p_value", "reject"],
        [[rep.name, _fmt(rep.statistic), _fmt(rep.df), _fmt(rep.p_value), str(rep.reject_at_5pct).lower()]],
    )
    return {"t": rep.statistic, "df": rep.df, "p_value": rep.p_value}


def cmd_plotdata(cfg, args, out: Path) -> dict:
    kind = args.kind
    target = out / f"plot_{kind}.csv"
    if kind == "rmse-bars":
        if not args.table:
            raise ConfigError("rmse-bars needs --table")
        emit_plotdata(EvaluationTable.read_csv(args.table), kind, target)
        return {"file": target.name}
    _, ins, _ = _returns_and_split(cfg)
    if kind == "irf":
        model = fit_var(ins, cfg.p)
        irfs = {"constant": impulse_response(model, cholesky_identify(model), cfg.irf_horizon)}
        reg = regime_irfs(fit_tvp(ins, cfg.p, cfg.tvp), cfg.irf_horizon)
        irfs.update(zip(reg.regimes, reg.irfs))
        emit_plotdata(irfs, kind, target)
    elif kind == "cusum":
        Y, X = lag_matrix(ins.values, cfg.p)
        emit_plotdata({n: diagnostics.cusum(Y[:, k], X) for k, n in enumerate(ins.names)}, kind, target)
    else:
        e = _mean_residuals(cfg, ins, args.mean)
        _, _, path = garch.fit_garch_dcc(e, False, "student_t", seed=int_seed(cfg.seed, "plotdata", args.mean))
        n = path.R.shape[0]
        emit_plotdata((path, list(ins.names), [str(d) for d in ins.dates[-n:]]), kind, target)
    return {"file": target.name}


COMMANDS = {
    "ingest": cmd_ingest,
    "diagnose": cmd_diagnose,
    "fit-var": cmd_fit_var,
    "fit-tvp": cmd_fit_tvp,
    "fit-dcc": cmd_fit_dcc,
    "fit-copula": cmd_fit_copula,
    "gof": cmd_gof,
    "fit-gpr": cmd_fit_gpr,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "plotdata": cmd_plotdata,
}


# ------------------------------------------------------------------ parser


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run")
    g.add_argument("--config", help="key = value config file")
    g.add_argument("--out", default=".", help="output directory (default: current)")
    g.add_argument("-v", "--verbose", action="store_true")
    keys = common.add_argument_group("config overrides")
    for f in _CONFIG_KEYS:
        flag = "--" + f.name.replace("_", "-")
        keys.add_argument(flag, dest=f"cfg_{f.name}", default=None, metavar=f.name.upper())
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="macroenergy", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=[common])

    add("ingest", "load the panel, write returns and descriptive statistics")
    p = add("diagnose", "unit-root, cointegration, residual and stability tests")
    p.add_argument("--adf-max-lag", type=int, default=12)
    p.add_argument("--johansen-lag", type=int, default=1)
    p.add_argument("--portmanteau-lags", type=int, default=16)
    add("fit-var", "fit the VAR and write coefficients and IRFs")
    add("fit-tvp", "filter the TVP-VAR and write coefficient paths and regime IRFs")
    p = add("fit-dcc", "GARCH-t marginals with a DCC, ADCC or t-copula layer")
    p.add_argument("--asymmetric", action="store_true")
    p.add_argument("--joint", choices=["gaussian", "t", "tcopula"], default="t")
    p.add_argument("--mean", choices=["VAR", "TVP"], default="VAR")
    p = add("fit-copula", "single-family and mixture copula fits")
    p.add_argument("--family", choices=[*copulas.FAMILIES, "mixture", "all"], default="all")
    p.add_argument("--mean", choices=["VAR", "TVP"], default="VAR")
    p.add_argument("--full", action="store_true", help="one K-dimensional fit instead of pairs with the target")
    p = add("gof", "parametric-bootstrap goodness of fit")
    p.add_argument("--family", choices=[*copulas.FAMILIES, "all"], default="all")
    p.add_argument("--mean", choices=["VAR", "TVP"], default="VAR")
    p.add_argument("--full", action="store_true")
    p = add("fit-gpr", "GP residual models on mean-equation residuals")
    p.add_argument("--lags", type=int, default=None)
    p.add_argument("--no-opt", action="store_true")
    p.add_argument("--mean", choices=["VAR", "TVP"], default="VAR")
    add("evaluate", "rolling one-step-ahead RMSE evaluation")
    p = add("compare", "Welch test between two model groups of an RMSE table")
    p.add_argument("--table", required=True)
    p.add_argument("--group-a", required=True, help="comma-separated model names")
    p.add_argument("--group-b", required=True)
    p = add("plotdata", "long-format CSV for figures")
    p.add_argument("--kind", choices=PLOT_KINDS, required=True)
    p.add_argument("--table", help="RMSE table for rmse-bars")
    p.add_argument("--mean", choices=["VAR", "TVP"], default="VAR")
    return parser


def _versions() -> dict:
    import pandas
    import scipy
    import statsmodels

    return {
        "macroenergy": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pandas.__version__,
        "statsmodels": statsmodels.__version__,
    }


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out)
    started = time.time()
    summary = {"command": args.command, "argv": list(sys.argv[1:] if argv is None else argv)}
    code = 0
    try:
        overrides = {f.name: getattr(args, f"cfg_{f.name}") for f in _CONFIG_KEYS}
        cfg = load_config(args.config, overrides)
        summary["config"] = cfg.to_dict()
        if args.command not in ("compare",) and not (args.command == "plotdata" and args.kind == "rmse-bars"):
            if not cfg.data:
                raise ConfigError("no data path (set data = ... or pass --data)")
        out.mkdir(parents=True, exist_ok=True)
        summary["result"] = COMMANDS[args.command](cfg, args, out)
        summary["status"] = "ok"
    except MacroEnergyError as exc:
        code = exc.exit_code
        summary["status"] = "error"
        summary["error"] = f"{type(exc).__name__}: {exc}"
        print(f"error: {exc}", file=sys.stderr)
    except np.linalg.LinAlgError as exc:
        code = 3
        summary["status"] = "error"
        summary["error"] = f"LinAlgError: {exc}"
        print(f"error: {exc}", file=sys.stderr)
    except Exception as exc:  # recorded, then re-raised for the traceback
        summary["status"] = "error"
        summary["error"] = f"{type(exc).__name__}: {exc}"
        summary["exit_code"] = 1
        _write_summary(out, summary, started)
        raise
    summary["exit_code"] = code
    _write_summary(out, summary, started)
    return code


def _write_summary(out: Path, summary: dict, started: float) -> None:
    summary["versions"] = _versions()
    summary["wall_time_s"] = round(time.time() - started, 3)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "run.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    except OSError as exc:
        print(f"warning: could not write run.json: {exc}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
