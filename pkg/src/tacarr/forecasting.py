"""One-step-ahead forecasts, rolling-window evaluation and in-sample accuracy."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .estimation import FitOptions, FitResult, as_range_series, fit
from .models import Family, ModelSpec, ParamVector, conditional_mean
from .ranges import NO_REGIME, RangeObs, RangeSeries, classify_regime

__all__ = [
    "ForecastRun",
    "accuracy",
    "insample_accuracy",
    "one_step_forecast",
    "rolling_forecast",
]


def accuracy(realized, predicted) -> tuple[float, float]:
    """``(rmse, mae)`` with the number of pairs as denominator."""
    e = np.asarray(realized, dtype=float) - np.asarray(predicted, dtype=float)
    if e.size == 0:
        raise ValueError("no forecast errors to summarise")
    return math.sqrt(float(np.mean(e * e))), float(np.mean(np.abs(e)))


def _pre_sample(ranges: RangeSeries, spec: ModelSpec):
    if spec.two_series:
        return (float(np.mean(ranges.ru)), float(np.mean(ranges.rd)))
    return float(np.mean(ranges.r))


def one_step_forecast(model: FitResult | ParamVector, ranges, spec: ModelSpec | None = None, init=None) -> float:
    """Conditional mean of the range one period past the end of ``ranges``.

    ``ranges`` is the estimation window (or any history at least
    ``spec.start`` long). Pre-sample values default to the window means,
    matching what :func:`tacarr.fit` used. The regime is classified from
    the last ``l`` observed days.
    """
    if isinstance(model, FitResult):
        params, spec = model.params, model.spec
    else:
        params = model
        if spec is None:
            raise ValueError("a ModelSpec is required when forecasting from raw parameters")
    ranges = as_range_series(ranges)
    if len(ranges) < max(spec.start, 1):
        raise ValueError(f"need at least {spec.start} observations of history for {spec.name}")
    if spec.family is Family.TARR and spec.threshold is None:
        spec = spec.with_threshold(float(np.mean(ranges.r)))
    if init is None:
        init = _pre_sample(ranges, spec)
    padded = ranges.append(RangeObs(0.0, 0.0, 0.0))
    path = conditional_mean(padded, params, spec, init=init, validate=False)
    return float(path.lam[-1])


def _step_regime(window: RangeSeries, spec: ModelSpec) -> int:
    if spec.family is Family.TACARR:
        return int(classify_regime(window[len(window) - spec.l :], spec.l))
    if spec.family is Family.TARR:
        return 0 if window.r[len(window) - spec.delay] >= spec.threshold else 1
    return NO_REGIME


def _regime_label(spec: ModelSpec, g: int) -> str:
    if g < 0:
        return ""
    return spec.labels[g]


@dataclass
class ForecastRun:
    spec: ModelSpec
    N: int
    forecasts: np.ndarray
    realized: np.ndarray
    regimes: np.ndarray
    converged: np.ndarray
    dates: list | None = None
    fits: list[FitResult] = field(default_factory=list)

    @property
    def errors(self) -> np.ndarray:
        return self.realized - self.forecasts

    @property
    def n_forecasts(self) -> int:
        return len(self.forecasts)

    @property
    def rmse(self) -> float:
        return accuracy(self.realized, self.forecasts)[0]

    @property
    def mae(self) -> float:
        return accuracy(self.realized, self.forecasts)[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date", "realized", "forecast", "regime", "converged"])
        dates = self.dates if self.dates is not None else list(range(self.N, self.N + self.n_forecasts))
        for d, r, f, g, c in zip(dates, self.realized, self.forecasts, self.regimes, self.converged):
            w.writerow([str(d), repr(float(r)), repr(float(f)), _regime_label(self.spec, g), int(bool(c))])
        return buf.getvalue()


def rolling_forecast(
    series,
    spec: ModelSpec,
    N: int,
    refit_every: int | None = 1,
    options: FitOptions | None = None,
    warm_start: bool = True,
    keep_fits: bool = False,
) -> ForecastRun:
    """Fixed-length rolling window: fit on ``series[k:k+N]``, forecast ``series[k+N]``.

    Refits happen every ``refit_every`` steps (``None`` fits once) and start
    from the previous estimates when ``warm_start`` is on; the first fit
    uses the full multi-start search. Non-converged refits are flagged but
    still used.
    """
    series = as_range_series(series)
    T = len(series)
    if not 0 < N < T:
        raise ValueError(f"window N={N} must satisfy 0 < N < T={T}")
    options = options or FitOptions(compute_se=False)
    n_steps = T - N
    forecasts = np.empty(n_steps)
    regimes = np.full(n_steps, NO_REGIME, dtype=np.int64)
    converged = np.zeros(n_steps, dtype=bool)
    fits = []
    current: FitResult | None = None
    for k in range(n_steps):
        window = series[k : k + N]
        due = current is None or (refit_every is not None and k % refit_every == 0)
        if due:
            if current is not None and warm_start:
                opts = replace(options, start=current.params, n_start=1)
            else:
                opts = options
            current = fit(window, spec, opts)
            if keep_fits:
                fits.append(current)
        fspec = current.spec
        forecasts[k] = one_step_forecast(current.params, window, fspec)
        regimes[k] = _step_regime(window, fspec)
        converged[k] = current.converged
    dates = series.dates[N:] if series.dates is not None else None
    return ForecastRun(
        spec=spec,
        N=N,
        forecasts=forecasts,
        realized=series.r[N:].copy(),
        regimes=regimes,
        converged=converged,
        dates=dates,
        fits=fits,
    )


def insample_accuracy(fit_result: FitResult, ranges) -> tuple[float, float]:
    """RMSE and MAE of the fitted conditional means over ``t >= start``."""
    ranges = as_range_series(ranges)
    lam = conditional_mean(ranges, fit_result.params, fit_result.spec, validate=False)
    s = fit_result.spec.start
    return accuracy(ranges.r[s:], lam.lam[s:])
