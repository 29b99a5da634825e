"""Residual goodness-of-fit, serial-correlation and forecast-comparison tests."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .likelihood import Residuals, standardized_residuals
from .models import Innovation, ModelSpec, ParamVector, _two_series, conditional_mean

__all__ = [
    "TestReport",
    "acf",
    "dm_test",
    "innovation_cdf",
    "ks_bootstrap_pvalue",
    "ks_test",
    "law_residuals",
    "ljung_box",
]

log = logging.getLogger(__name__)


@dataclass
class TestReport:
    name: str
    statistic: float
    p_value: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.statistic = float(self.statistic)
        self.p_value = float(min(max(self.p_value, 0.0), 1.0))

    def to_dict(self) -> dict:
        return asdict(self)

    def __str__(self) -> str:
        return f"{self.name}: {self.statistic:.4f} ({self.p_value:.4f})"


def innovation_cdf(innovation: Innovation | str, theta2: float | None = None):
    """CDF of the unit-mean innovation law."""
    innovation = Innovation(innovation)
    if innovation is Innovation.EXPONENTIAL:
        return lambda x: -np.expm1(-np.maximum(np.asarray(x, dtype=float), 0.0))
    if theta2 is None or not theta2 > 0:
        raise ValueError("lognormal reference law needs theta2 > 0")
    sd = math.sqrt(theta2)

    def cdf(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(x) + 0.5 * theta2) / sd
        return stats.norm.cdf(z)

    return cdf


def law_residuals(ranges, params: ParamVector, spec: ModelSpec, init=None) -> Residuals:
    """Residuals whose law is the model's innovation law, labelled by branch.

    Threshold and single-branch models give ``R_t / lam_t``. Upward/downward
    models give ``ru_t / lam^u_t`` (label 0) followed by ``rd_t / lam^d_t``
    (label 1), since only the per-direction ratios follow the fitted laws.
    """
    if not spec.two_series:
        return standardized_residuals(ranges.r, conditional_mean(ranges, params, spec, init, validate=False))
    parts = [
        standardized_residuals(x, path).values
        for x, path in zip((ranges.ru, ranges.rd), _two_series(ranges, params, spec, init, False))
    ]
    labels = np.concatenate([np.full(len(v), b, dtype=np.int64) for b, v in enumerate(parts)])
    return Residuals(np.concatenate(parts), labels)


def _ks_statistic(u: np.ndarray) -> float:
    """sup |F_n - F| for values already mapped through the reference CDF."""
    u = np.sort(u)
    n = u.size
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - u), np.max(u - (i - 1) / n)))


def _ks_pvalue(d: float, n: int) -> float:
    return float(stats.kstwobign.sf(d * math.sqrt(n)))


def ks_test(
    residuals: Residuals | np.ndarray,
    innovation: Innovation | str,
    theta2=None,
    mode: str = "pooled",
    min_obs: int = 10,
) -> TestReport:
    """Kolmogorov-Smirnov test of standardised residuals against the innovation law.

    ``theta2`` is a scalar or one value per regime. ``mode="pooled"`` maps
    each residual through its own regime's CDF and tests the result against
    Uniform(0, 1); ``mode="per-regime"`` tests each regime separately and
    reports the largest statistic (with its p-value). The p-value is the
    classical asymptotic Kolmogorov one, ignoring parameter estimation.
    """
    if isinstance(residuals, Residuals):
        values, regime = residuals.values, residuals.regime
    else:
        values = np.asarray(residuals, dtype=float)
        regime = np.zeros(values.size, dtype=np.int64)
    if np.any(values < 0):
        raise ValueError("standardised residuals must be non-negative")
    innovation = Innovation(innovation)
    regime = np.where(regime < 0, 0, regime)
    labels = sorted(set(regime.tolist()))
    if innovation is Innovation.LOGNORMAL:
        th = np.atleast_1d(np.asarray(theta2, dtype=float))
        cdfs = {g: innovation_cdf(innovation, float(th[g] if th.size > 1 else th[0])) for g in labels}
    else:
        cdfs = {g: innovation_cdf(innovation) for g in labels}
    params = {"law": innovation.value, "mode": mode, "n": int(values.size)}
    if mode == "pooled":
        u = np.empty(values.size)
        for g in labels:
            mask = regime == g
            u[mask] = cdfs[g](values[mask])
        d = _ks_statistic(u)
        return TestReport("KS", d, _ks_pvalue(d, u.size), params)
    if mode != "per-regime":
        raise ValueError(f"unknown KS mode {mode!r}")
    results = {}
    for g in labels:
        x = values[regime == g]
        if x.size < min_obs:
            warnings.warn(f"regime {g}: only {x.size} residuals, KS test skipped", RuntimeWarning)
            continue
        d = _ks_statistic(cdfs[g](x))
        results[g] = (d, _ks_pvalue(d, x.size), int(x.size))
    if not results:
        raise ValueError("no regime has enough residuals for a KS test")
    worst = max(results, key=lambda g: results[g][0])
    params["per_regime"] = {str(g): {"statistic": v[0], "p_value": v[1], "n": v[2]} for g, v in results.items()}
    return TestReport("KS", results[worst][0], results[worst][1], params)


def acf(x, nlags: int) -> np.ndarray:
    """Sample autocorrelations at lags ``1..nlags`` (biased, full-sample denominator)."""
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    denom = float(d @ d)
    if denom <= 0 or not np.isfinite(denom):
        raise ValueError("autocorrelation undefined for a constant series")
    n = x.size
    return np.array([float(d[k:] @ d[: n - k]) / denom for k in range(1, nlags + 1)])


def ljung_box(residuals, h: int) -> TestReport:
    """Ljung-Box ``Q(h) = n(n+2) sum_k rho_k^2/(n-k)`` with ``h`` degrees of freedom."""
    x = residuals.values if isinstance(residuals, Residuals) else np.asarray(residuals, dtype=float)
    n = x.size
    if not 1 <= h < n:
        raise ValueError(f"need 1 <= h < n, got h={h}, n={n}")
    rho = acf(x, h)
    k = np.arange(1, h + 1)
    q = n * (n + 2) * float(np.sum(rho**2 / (n - k)))
    return TestReport(f"Q({h})", q, float(stats.chi2.sf(q, h)), {"h": h, "n": n})


def _loss(e: np.ndarray, loss: str) -> np.ndarray:
    if loss == "squared":
        return e * e
    if loss == "absolute":
        return np.abs(e)
    raise ValueError(f"unknown loss {loss!r}")


def dm_test(errors_a, errors_b, loss: str = "squared", min_obs: int = 10, hac_lags: int = 0) -> TestReport:
    """Diebold-Mariano test that forecaster A is more accurate than B.

    ``d_t = L(e_B) - L(e_A)``; the statistic ``mean(d) / sqrt(var(d) / n)``
    is positive when A has the smaller loss, and the one-sided p-value is
    ``P(Z >= DM)``. ``hac_lags > 0`` swaps the plain variance for a
    Bartlett-weighted long-run variance. Identical error sequences are
    reported as no difference (DM = 0, p = 1).
    """
    ea = np.asarray(errors_a, dtype=float)
    eb = np.asarray(errors_b, dtype=float)
    if ea.shape != eb.shape or ea.ndim != 1:
        raise ValueError("forecast error sequences must be one-dimensional and of equal length")
    n = ea.size
    if n < min_obs:
        raise ValueError(f"need at least {min_obs} forecast errors, got {n}")
    d = _loss(eb, loss) - _loss(ea, loss)
    params = {"loss": loss, "n": n, "alternative": "A more accurate", "hac_lags": hac_lags}
    dbar = float(d.mean())
    dc = d - dbar
    var = float(dc @ dc) / n
    for lag in range(1, hac_lags + 1):
        var += 2.0 * (1.0 - lag / (hac_lags + 1)) * float(dc[lag:] @ dc[:-lag]) / n
    scale = max(float(np.max(np.abs(d))), 1e-300)
    if var <= (1e-14 * scale) ** 2:
        if abs(dbar) <= 1e-14 * scale:
            return TestReport("DM", 0.0, 1.0, {**params, "note": "no difference"})
        raise ValueError("degenerate Diebold-Mariano test: loss differential has zero variance")
    stat = dbar / math.sqrt(var / n)
    return TestReport("DM", stat, float(stats.norm.sf(stat)), params)


def ks_bootstrap_pvalue(fit_result, ranges, n_boot: int = 200, seed: int = 0, mode: str = "pooled") -> float:
    """Parametric-bootstrap p-value for the KS statistic of a fitted model.

    Each bootstrap sample is generated from the fitted recursion and
    innovation law, keeping the observed up/down split fractions, then
    refitted (warm-started at the original estimates) before its KS
    statistic is recomputed. Single-series families only.
    """
    from . import _recursions
    from .estimation import FitOptions, as_range_series, fit
    from .models import Family
    from .ranges import RangeSeries

    spec = fit_result.spec
    if spec.two_series:
        raise ValueError("bootstrap KS is available for single-series families only")
    ranges = as_range_series(ranges)
    params = fit_result.params
    observed = ks_test(fit_result.residuals, spec.innovation, params.theta2, mode=mode).statistic
    rng = np.random.default_rng(seed)
    n = len(ranges)
    split = np.divide(ranges.ru, ranges.r, out=np.full(n, 0.5), where=ranges.r > 0)
    omega, alpha, beta, _ = params.stacked()
    rule = {Family.CARR: 0, Family.TACARR: 1, Family.TARR: 2}[spec.family]
    threshold = spec.threshold if spec.threshold is not None else 0.0
    opts = FitOptions(n_start=1, compute_se=False, start=params)
    exceed = 0
    for _ in range(n_boot):
        if spec.innovation is Innovation.EXPONENTIAL:
            eps = np.tile(rng.standard_exponential(n), (spec.n_branches, 1))
        else:
            th = params.theta2.reshape(-1, 1)
            eps = np.exp(-0.5 * th + np.sqrt(th) * rng.standard_normal(n))
        r, ru, rd, _, _ = _recursions.simulate_threshold(
            np.ascontiguousarray(eps), split, rule, spec.l, spec.delay, threshold,
            omega, alpha, beta, spec.start, float(np.mean(ranges.r)),
        )
        refit = fit(RangeSeries(r, ru, rd), spec, opts)
        stat = ks_test(refit.residuals, spec.innovation, refit.params.theta2, mode=mode).statistic
        exceed += stat >= observed
    return (exceed + 1) / (n_boot + 1)
