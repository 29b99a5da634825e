"""Command-line interface: ``tacarr {ranges,fit,simulate,forecast,compare,diagnose}``.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or
configuration error. Machine-readable outputs (JSON, CSV) depend only on
the inputs and ``--seed``.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datafiles import (
    DataError,
    acf_table,
    apply_zero_floor,
    lambda_csv,
    load_series,
    ranges_csv,
    summary_statistics,
    zero_counts,
)
from .diagnostics import dm_test, ks_bootstrap_pvalue, ks_test, law_residuals, ljung_box
from .estimation import FitOptions, FitResult, fit
from .forecasting import ForecastRun, rolling_forecast
from .likelihood import model_loglik
from .models import Family, ModelSpec, ParamVector, conditional_mean
from .ranges import RangeSeries
from .simulation import SimConfig, recovery_study

log = logging.getLogger("tacarr")

DEFAULT_MODELS = ("LNTACARR(1,1,1)", "LNCARR(1,1)", "ACARR(1,1)", "FACARR(1,1,1)", "LNTARR(1,1)")
Q_LAGS = (1, 5, 22)


class UsageError(Exception):
    """Bad arguments or configuration (exit code 2)."""


# ---------------------------------------------------------------- output files


class Outputs:
    """Files written by one command; removed again if the command fails."""

    def __init__(self, directory: Path):
        self.dir = directory
        self.written: list[Path] = []

    def write(self, name: str, text: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / name
        tmp = path.with_name(path.name + ".part")
        with open(tmp, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
        self.written.append(path)
        return path

    def json(self, name: str, obj) -> Path:
        return self.write(name, dumps(obj))

    def discard(self) -> None:
        for path in self.written:
            try:
                path.unlink()
            except OSError:
                pass
        self.written.clear()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (_dt.date, Path)):
        return str(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def slug(spec: ModelSpec) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", spec.name).strip("_")


# ---------------------------------------------------------------- argument helpers


def _date(text) -> _dt.date:
    try:
        return _dt.date.fromisoformat(str(text))
    except ValueError:
        raise UsageError(f"invalid date {text!r}; expected YYYY-MM-DD") from None


def _spec(name: str) -> ModelSpec:
    try:
        return ModelSpec.parse(name)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"unknown model {name!r}: {exc}") from None


def _columns(text) -> dict[str, str] | None:
    if not text:
        return None
    if isinstance(text, dict):
        return {str(k): str(v) for k, v in text.items()}
    out = {}
    for item in str(text).split(","):
        key, sep, value = item.partition("=")
        if not sep or key.strip() not in ("date", "open", "high", "low", "close"):
            raise UsageError(f"bad column mapping {item!r}; use e.g. date=Date,open=Open")
        out[key.strip()] = value.strip()
    return out


def _params(text, spec: ModelSpec) -> ParamVector:
    """``name=value,...`` inline, a JSON object, or a path to a JSON file."""
    if isinstance(text, dict):
        values = text
    elif os.path.exists(str(text)):
        with open(text) as fh:
            data = json.load(fh)
        values = data.get("parameters", data)
    elif str(text).lstrip().startswith("{"):
        values = json.loads(text)
    else:
        values = {}
        for item in str(text).split(","):
            key, sep, value = item.partition("=")
            if not sep:
                raise UsageError(f"bad parameter assignment {item!r}")
            try:
                values[key.strip()] = float(value)
            except ValueError:
                raise UsageError(f"parameter {key.strip()!r} is not numeric") from None
    try:
        params = ParamVector.from_dict(spec, {k: float(v) for k, v in values.items()})
        params.validate(spec)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"invalid parameters for {spec.name}: {exc}") from None
    unknown = set(values) - set(ParamVector.names(spec))
    if unknown:
        raise UsageError(f"unknown parameter names for {spec.name}: {sorted(unknown)}")
    return params


def _input_path(path) -> Path:
    if path is None:
        raise UsageError("an input file is required")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input file not found: {p}")
    return p


def _load(args, start=None, end=None) -> RangeSeries:
    path = _input_path(args.input)
    ranges = load_series(path, _columns(args.columns), args.scale, start, end)
    if len(ranges) == 0:
        raise UsageError("no observations in the selected date range")
    return ranges


def _prepare(ranges: RangeSeries, spec: ModelSpec, zero_floor: bool) -> tuple[RangeSeries, dict | None]:
    bad = zero_counts(ranges, spec)
    if not bad:
        return ranges, None
    if not zero_floor:
        raise DataError(
            f"{spec.name}: {bad} zero range(s) cannot enter a lognormal likelihood; "
            "rerun with --zero-floor to replace them by half the smallest positive range"
        )
    return apply_zero_floor(ranges, spec)


def _fit_options(args, **overrides) -> FitOptions:
    return FitOptions(seed=args.seed, jobs=args.jobs, n_start=args.n_start, **overrides)


def _test_dict(report) -> dict:
    return {"statistic": report.statistic, "p_value": report.p_value, **report.params}


# ---------------------------------------------------------------- reports


def diagnostics_block(ranges: RangeSeries, params: ParamVector, spec: ModelSpec) -> tuple[dict, np.ndarray]:
    """KS (pooled and per-regime) and Ljung-Box tests; also returns the total-range residuals."""
    theta2 = params.theta2
    lr = law_residuals(ranges, params, spec)
    path = conditional_mean(ranges, params, spec, validate=False)
    resid = ranges.r[spec.start :] / path.lam[spec.start :]
    out = {
        "ks_pooled": _test_dict(ks_test(lr, spec.innovation, theta2, mode="pooled")),
        "ks_per_regime": _test_dict(ks_test(lr, spec.innovation, theta2, mode="per-regime")),
    }
    for h in Q_LAGS:
        if len(resid) > h:
            out[f"Q({h})"] = _test_dict(ljung_box(resid, h))
    return out, resid


def fit_report(res: FitResult, ranges: RangeSeries, seed: int, floor_info=None) -> dict:
    spec = res.spec
    diag, _ = diagnostics_block(ranges, res.params, spec)
    counts = {}
    if not spec.two_series and spec.n_branches > 1:
        b = res.lambda_path.branch[spec.start :]
        counts = {lab: int(np.sum(b == g)) for g, lab in enumerate(spec.labels)}
    dates = ranges.dates or []
    return {
        "model": spec.name,
        "family": spec.family.value,
        "innovation": spec.innovation.value,
        "threshold": spec.threshold,
        "delay": spec.delay if spec.family is Family.TARR else None,
        "sample": {"first": dates[0] if dates else 0, "last": dates[-1] if dates else len(ranges) - 1},
        "n_obs": res.n_obs,
        "n_eff": res.n_eff,
        "k": res.k,
        "parameters": res.param_dict,
        "std_errors": res.std_errors,
        "llf": res.llf,
        "aic": res.aic,
        "bic": res.bic,
        "converged": res.converged,
        "regime_counts": counts,
        "diagnostics": diag,
        "zero_floor": floor_info,
        "seed": seed,
    }


def _fit_text(res: FitResult, rep: dict) -> str:
    lines = [res.summary(), "  diagnostics:"]
    for key, test in rep["diagnostics"].items():
        lines.append(f"    {key:<14s} {test['statistic']:12.4f}  (p={test['p_value']:.4f})")
    if rep["regime_counts"]:
        lines.append("  regime counts: " + ", ".join(f"{k}={v}" for k, v in rep["regime_counts"].items()))
    return "\n".join(lines) + "\n"


def _render_acf_svg(acf_csv: str, title: str) -> str:
    try:
        import matplotlib
    except ImportError:
        raise RuntimeError("--plot needs matplotlib (pip install 'tacarr[plot]')") from None
    import io

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = [line.split(",") for line in acf_csv.strip().splitlines()[1:]]
    lags = [int(r[0]) for r in rows]
    vals = [float(r[1]) for r in rows]
    band = float(rows[0][3]) if rows else 0.0
    plt.rcParams["svg.hashsalt"] = "tacarr"
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.bar(lags, vals, width=0.4, color="0.3")
    ax.axhline(band, ls="--", color="tab:red", lw=0.8)
    ax.axhline(-band, ls="--", color="tab:red", lw=0.8)
    ax.axhline(0, color="k", lw=0.5)
    ax.set_xlabel("lag")
    ax.set_ylabel("ACF")
    ax.set_title(title)
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def _table(header: list[str], rows: list[list]) -> str:
    cells = [header] + [[f"{v:.4f}" if isinstance(v, float) else str(v) for v in r] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells) + "\n"


def _csv(header: list[str], rows: list[list]) -> str:
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        if v is None:
            return ""
        return str(v)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows([fmt(v) for v in row] for row in rows)
    return buf.getvalue()


# ---------------------------------------------------------------- commands


def cmd_ranges(args, out: Outputs) -> None:
    ranges = _load(args, args.start, args.end)
    out.write("ranges.csv", ranges_csv(ranges))
    summary = summary_statistics(ranges)
    out.json("summary.json", {"n_obs": len(ranges), "components": summary})
    header = ["series", "count", "min", "mean", "max", "sd", "skewness", "zeros"] + [f"Q({h})" for h in Q_LAGS]
    rows = [
        [name] + [block.get(k) if block.get(k) is not None else "n/a" for k in header[1:]]
        for name, block in summary.items()
    ]
    text = _table(header, rows)
    out.write("summary.txt", text)
    print(text, end="")


def cmd_fit(args, out: Outputs) -> None:
    specs = [_spec(m) for m in args.model or []]
    if not specs:
        raise UsageError("fit needs at least one --model")
    ranges_all = _load(args, args.start, args.end)
    rows, texts = [], []
    for spec in specs:
        ranges, floor_info = _prepare(ranges_all, spec, args.zero_floor)
        res = fit(ranges, spec, _fit_options(args, compute_se=not args.no_se))
        rep = fit_report(res, ranges, args.seed, floor_info)
        name = slug(res.spec)
        out.json(f"fit_{name}.json", rep)
        out.write(f"lambda_{name}.csv", lambda_csv(ranges, res.lambda_path, res.spec.labels))
        _, resid = diagnostics_block(ranges, res.params, res.spec)
        acf_csv = acf_table(resid, 22, 0.99)
        out.write(f"acf_{name}.csv", acf_csv)
        if args.plot:
            out.write(f"acf_{name}.svg", _render_acf_svg(acf_csv, f"Residual ACF, {res.spec.name}"))
        target = "ru+rd" if res.spec.two_series else "r"
        rows.append([res.spec.name, target, res.k, res.n_eff, res.llf, res.aic, res.bic, res.converged])
        texts.append(_fit_text(res, rep))
    header = ["model", "target", "k", "n_eff", "llf", "aic", "bic", "converged"]
    out.write("models.csv", _csv(header, rows))
    text = "\n".join(texts) + "\n" + _table(header, rows)
    # likelihoods are only comparable between models of the same data
    for target in ("r", "ru+rd"):
        group = [r for r in rows if r[1] == target]
        if len(group) > 1:
            text += f"lowest AIC ({target}): {min(group, key=lambda r: r[5])[0]}\n"
            text += f"lowest BIC ({target}): {min(group, key=lambda r: r[6])[0]}\n"
    out.write("report.txt", text)
    print(text, end="")


def _sim_checkpoint_name(config: SimConfig) -> str:
    key = dumps({
        "model": config.spec.name,
        "threshold": config.spec.threshold,
        "params": config.true_params.to_array().tolist(),
        "T": config.T,
        "burn_in": config.burn_in,
        "seed": config.seed,
        "split": config.split,
        "n_start": config.fit_options.n_start,
    })
    return "checkpoint_" + hashlib.sha256(key.encode()).hexdigest()[:16] + ".jsonl"


def cmd_simulate(args, out: Outputs) -> None:
    if not args.model:
        raise UsageError("simulate needs --model")
    spec = _spec(args.model[0])
    if spec.two_series:
        raise UsageError(f"{spec.name}: simulation is available for CARR, TARR and TACARR families only")
    if spec.family is Family.TARR:
        if args.threshold is None:
            raise UsageError("simulating TARR needs --threshold")
        spec = spec.with_threshold(args.threshold)
    if args.params is None:
        raise UsageError("simulate needs --params")
    params = _params(args.params, spec)
    split = None
    if args.split:
        try:
            a, b = (float(v) for v in str(args.split).split(","))
        except ValueError:
            raise UsageError("--split takes two Beta shape values, e.g. 2,2") from None
        split = (a, b)
    try:
        config = SimConfig(
            spec, params, args.T, n_reps=args.reps, burn_in=args.burn_in, seed=args.seed,
            split=split, fit_options=_fit_options(args, compute_se=False), jobs=args.jobs,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ckpt = out.dir / _sim_checkpoint_name(config)
    if ckpt.exists() and not args.resume:
        ckpt.unlink()
    out.dir.mkdir(parents=True, exist_ok=True)
    report = recovery_study(config, checkpoint=ckpt)
    name = slug(spec)
    out.json(f"recovery_{name}_T{args.T}.json", report.to_dict())
    out.write(f"recovery_{name}_T{args.T}.csv", report.to_csv())
    rows = [[n, float(t), float(m), float(d)] for n, t, m, d in zip(report.names, report.truth, report.mean, report.made)]
    text = (
        f"{spec.name}  T={args.T}  replications={report.n_reps}  converged={report.convergence_rate:.3f}\n"
        + _table(["parameter", "true", "mean", "MADE"], rows)
    )
    out.write(f"recovery_{name}_T{args.T}.txt", text)
    print(text, end="")


def _split_index(ranges: RangeSeries, args) -> int:
    """Number of in-sample observations (the rolling-window length N)."""
    T = len(ranges)
    given = [x is not None for x in (args.split_date, args.n_out, args.window)]
    if sum(given) != 1:
        raise UsageError("give exactly one of --split-date, --n-out or --window")
    if args.window is not None:
        N = args.window
    elif args.n_out is not None:
        N = T - args.n_out
    else:
        if ranges.dates is None:
            raise UsageError("--split-date needs dated input")
        split = args.split_date
        N = sum(1 for d in ranges.dates if d < split)
    if not 0 < N < T:
        raise UsageError(f"split leaves {N} in-sample and {T - N} out-of-sample observations")
    return N


def _run_forecast(ranges, spec, N, args) -> ForecastRun:
    refit = None if args.refit_every == 0 else args.refit_every
    return rolling_forecast(ranges, spec, N, refit_every=refit, options=_fit_options(args, compute_se=False))


def _forecast_summary(run: ForecastRun) -> dict:
    return {
        "model": run.spec.name,
        "window": run.N,
        "n_forecasts": run.n_forecasts,
        "rmse": run.rmse,
        "mae": run.mae,
        "all_converged": bool(np.all(run.converged)),
    }


def cmd_forecast(args, out: Outputs) -> None:
    if not args.model:
        raise UsageError("forecast needs --model")
    spec = _spec(args.model[0])
    ranges, floor_info = _prepare(_load(args, args.start, args.end), spec, args.zero_floor)
    N = _split_index(ranges, args)
    run = _run_forecast(ranges, spec, N, args)
    name = slug(spec)
    summary = {**_forecast_summary(run), "refit_every": args.refit_every, "seed": args.seed, "zero_floor": floor_info}
    out.write(f"forecasts_{name}.csv", run.to_csv())
    out.json(f"forecast_{name}.json", summary)
    print(f"{spec.name}: {run.n_forecasts} one-step forecasts, RMSE={run.rmse:.4f} MAE={run.mae:.4f}")


def cmd_compare(args, out: Outputs) -> None:
    names = args.model or list(DEFAULT_MODELS)
    specs = [_spec(m) for m in names]
    baseline = _spec(args.baseline) if args.baseline else specs[0]
    if baseline.name not in [s.name for s in specs]:
        specs.insert(0, baseline)
    if len({s.name for s in specs}) != len(specs):
        raise UsageError("duplicate model in --model list")
    raw = _load(args, args.start, args.end)
    if args.zero_floor:
        raw, _ = apply_zero_floor(raw)
    N = _split_index(raw, args)
    runs = {}
    for spec in specs:
        ranges, _ = _prepare(raw, spec, False)
        runs[spec.name] = run = _run_forecast(ranges, spec, N, args)
        out.write(f"forecasts_{slug(spec)}.csv", run.to_csv())
    acc_rows = [[n, r.rmse, r.mae, r.n_forecasts, bool(np.all(r.converged))] for n, r in runs.items()]
    base = runs[baseline.name]
    others = [n for n in runs if n != baseline.name] or [baseline.name]
    dm_rows = []
    for n in others:
        rep = dm_test(base.errors, runs[n].errors, loss=args.loss)
        dm_rows.append([baseline.name, n, args.loss, rep.statistic, rep.p_value, rep.params.get("note", "")])
    acc_header = ["model", "rmse", "mae", "n_forecasts", "all_converged"]
    dm_header = ["model_a", "model_b", "loss", "dm", "p_value", "note"]
    out.write("accuracy.csv", _csv(acc_header, acc_rows))
    out.write("dm.csv", _csv(dm_header, dm_rows))
    out.json("compare.json", {
        "window": N,
        "n_forecasts": base.n_forecasts,
        "refit_every": args.refit_every,
        "seed": args.seed,
        "baseline": baseline.name,
        "accuracy": [dict(zip(acc_header, r)) for r in acc_rows],
        "dm": [dict(zip(dm_header, r)) for r in dm_rows],
        "dm_convention": "positive statistic favours model_a; p-value is one-sided P(Z >= dm)",
    })
    text = _table(acc_header, acc_rows) + "\n" + _table(dm_header, dm_rows)
    out.write("compare.txt", text)
    print(text, end="")


def cmd_diagnose(args, out: Outputs) -> None:
    threshold = args.threshold
    if args.fit:
        fit_path = _input_path(args.fit)
        with open(fit_path) as fh:
            rep = json.load(fh)
        spec = _spec(rep["model"])
        values = rep["parameters"]
        threshold = rep.get("threshold") if threshold is None else threshold
    elif args.model and args.params is not None:
        spec = _spec(args.model[0])
        values = args.params
    else:
        raise UsageError("diagnose needs --fit FILE or both --model and --params")
    if spec.family is Family.TARR:
        if threshold is None:
            raise UsageError("TARR diagnostics need the fitted threshold (--threshold)")
        spec = spec.with_threshold(threshold)
    params = _params(values, spec)
    ranges, floor_info = _prepare(_load(args, args.start, args.end), spec, args.zero_floor)
    diag, resid = diagnostics_block(ranges, params, spec)
    report = {
        "model": spec.name,
        "parameters": params.to_dict(spec),
        "llf": model_loglik(ranges, params, spec, validate=False),
        "diagnostics": diag,
        "zero_floor": floor_info,
    }
    if args.bootstrap:
        if spec.two_series:
            raise UsageError("bootstrap KS is available for single-series families only")
        res = fit(ranges, spec, _fit_options(args, compute_se=False, start=params, n_start=1))
        report["ks_bootstrap_p_value"] = ks_bootstrap_pvalue(res, ranges, args.bootstrap, seed=args.seed)
    name = slug(spec)
    out.json(f"diagnose_{name}.json", report)
    acf_csv = acf_table(resid, 22, 0.99)
    out.write(f"acf_{name}.csv", acf_csv)
    if args.plot:
        out.write(f"acf_{name}.svg", _render_acf_svg(acf_csv, f"Residual ACF, {spec.name}"))
    for key, test in diag.items():
        print(f"{key:<14s} {test['statistic']:12.4f}  (p={test['p_value']:.4f})")


COMMANDS = {
    "ranges": cmd_ranges,
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "forecast": cmd_forecast,
    "compare": cmd_compare,
    "diagnose": cmd_diagnose,
}


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _positive_int(text) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master random seed (default 0)")
    g.add_argument("--jobs", type=_positive_int, default=argparse.SUPPRESS, help="worker count (default 1)")
    g.add_argument("--output-dir", default=argparse.SUPPRESS, help="directory for output files (default .)")
    g.add_argument("--config", default=argparse.SUPPRESS, help="JSON or TOML file with option defaults")
    g.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = _Parser(prog="tacarr", description="Range-based volatility models", parents=[common])
    parser.add_argument("--version", action="version", version=f"tacarr {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    data = _Parser(add_help=False)
    data.add_argument("input", nargs="?", help="CSV with date,open,high,low,close or date,r,ru,rd columns")
    data.add_argument("--columns", help="column mapping, e.g. date=Date,open=Open,high=High,low=Low,close=Close")
    data.add_argument("--scale", type=float, default=100.0, help="range scale factor (default 100)")
    data.add_argument("--start", type=_date, help="first date to use")
    data.add_argument("--end", type=_date, help="last date to use")
    data.add_argument("--zero-floor", action="store_true",
                      help="replace zero ranges by half the smallest positive range (lognormal models)")

    fitting = _Parser(add_help=False)
    fitting.add_argument("--n-start", type=_positive_int, default=8, help="optimiser starting points")

    models = _Parser(add_help=False)
    models.add_argument("--model", action="append", help="model name, e.g. LNTACARR(1,1,1); repeatable")

    split = _Parser(add_help=False)
    split.add_argument("--split-date", type=_date, help="first out-of-sample date")
    split.add_argument("--n-out", type=_positive_int, help="number of out-of-sample observations")
    split.add_argument("--window", type=_positive_int, help="rolling-window length")
    split.add_argument("--refit-every", type=int, default=1, help="refit interval; 0 fits once (default 1)")

    p = sub.add_parser("ranges", parents=[common, data], help="decompose prices into ranges, summary statistics")
    p = sub.add_parser("fit", parents=[common, data, fitting, models], help="maximum-likelihood fit and diagnostics")
    p.add_argument("--no-se", action="store_true", help="skip standard errors")
    p.add_argument("--plot", action="store_true", help="also render the residual ACF as SVG")

    p = sub.add_parser("simulate", parents=[common, fitting, models], help="Monte Carlo parameter-recovery study")
    p.add_argument("--params", help="true parameters: name=value,... or a JSON file")
    p.add_argument("--T", "-T", type=_positive_int, default=1000, help="sample size")
    p.add_argument("--reps", type=_positive_int, default=200, help="replications")
    p.add_argument("--burn-in", type=int, default=500)
    p.add_argument("--split", help="Beta(a,b) shapes for the up/down split (default uniform)")
    p.add_argument("--threshold", type=float, help="TARR threshold")
    p.add_argument("--resume", action="store_true", help="continue from the checkpoint of an interrupted run")

    sub.add_parser("forecast", parents=[common, data, fitting, models, split], help="rolling one-step forecasts")

    p = sub.add_parser("compare", parents=[common, data, fitting, models, split],
                       help="out-of-sample accuracy and Diebold-Mariano tests")
    p.add_argument("--baseline", help="model tested against all others (default: first model)")
    p.add_argument("--loss", choices=("squared", "absolute"), default="squared")

    p = sub.add_parser("diagnose", parents=[common, data, fitting, models], help="residual diagnostics")
    p.add_argument("--fit", help="fit_*.json produced by the fit command")
    p.add_argument("--params", help="parameters: name=value,... or a JSON file")
    p.add_argument("--threshold", type=float, help="TARR threshold")
    p.add_argument("--bootstrap", type=int, default=0, help="parametric-bootstrap KS replications")
    p.add_argument("--plot", action="store_true")
    return parser


GLOBAL_DEFAULTS = {"seed": 0, "jobs": 1, "output_dir": ".", "config": None, "verbose": False}


def _load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    try:
        if p.suffix.lower() == ".toml":
            try:
                import tomllib
            except ImportError:
                import tomli as tomllib
            with open(p, "rb") as fh:
                return tomllib.load(fh)
        with open(p) as fh:
            return json.load(fh)
    except (ValueError, OSError) as exc:
        raise UsageError(f"cannot parse config {p}: {exc}") from None


def _apply_config(parser: argparse.ArgumentParser, config: dict, command: str) -> None:
    """Top-level keys and the ``[command]`` table become option defaults."""
    subs = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices
    sub = subs[command]
    known = {a.dest for a in sub._actions} | set(GLOBAL_DEFAULTS)
    anywhere = {a.dest for p in subs.values() for a in p._actions}
    merged = {}
    for k, v in config.items():
        if isinstance(v, dict) and k != "params":
            continue
        dest = k.replace("-", "_")
        # top-level keys meant for other commands are skipped, unknown ones are errors
        if dest in known or dest not in anywhere:
            merged[k] = v
    section = config.get(command, {})
    if not isinstance(section, dict):
        raise UsageError(f"config section [{command}] must be a table")
    merged.update(section)
    values = {}
    for key, value in merged.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise UsageError(f"unknown config key {key!r} for command {command!r}")
        action = next((a for a in sub._actions if a.dest == dest), None)
        if action is not None and action.type is not None and isinstance(value, str):
            value = action.type(value)
        if dest == "model" and isinstance(value, str):
            value = [value]
        values[dest] = value
    sub.set_defaults(**values)


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre_args, rest = pre.parse_known_args(argv)
    command = next((a for a in rest if a in COMMANDS), None)
    if pre_args.config and command:
        _apply_config(parser, _load_config(pre_args.config), command)
    args = parser.parse_args(argv)
    for key, value in GLOBAL_DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, value)
    if args.command is None:
        parser.print_help(sys.stderr)
        raise UsageError("a command is required")
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"tacarr: error: {exc}", file=sys.stderr)
        return 2
    except argparse.ArgumentTypeError as exc:
        print(f"tacarr: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Outputs(Path(args.output_dir))
    try:
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        out.discard()
        print(f"tacarr: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError, ArithmeticError, RuntimeError, OSError, NotImplementedError) as exc:
        out.discard()
        print(f"tacarr: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
