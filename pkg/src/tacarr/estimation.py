"""Constrained maximum-likelihood estimation for every family member.

The optimiser works in an unconstrained coordinate system:

* ``omega``, ``gamma`` and ``theta2`` are log-transformed;
* with the stationary constraint, each branch's free ``alpha``/``beta``
  coefficients are mapped onto the open simplex
  ``c_i = budget * exp(u_i) / (1 + sum_j exp(u_j))`` where ``budget`` is
  ``1 - 1e-6`` minus any fixed coefficients of that branch;
* under ``"positivity"`` they are simply log-transformed.

Every proposal is therefore feasible. Nelder-Mead screens ``n_start``
deterministic seeded starting points with loose tolerances, the best one
is polished at full tolerance, and a final restart from the polished point
decides the ``converged`` flag.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from . import _recursions
from ._recursions import LAMBDA_FLOOR, _LOG_2PI
from .likelihood import Residuals, standardized_residuals
from .models import (
    STATIONARITY_MARGIN,
    Family,
    Innovation,
    LambdaPath,
    ModelSpec,
    ParamVector,
    _init_array,
    branch_path,
    conditional_mean,
    resolve_threshold,
)
from .ranges import RangeSeries

__all__ = [
    "FitOptions",
    "FitResult",
    "as_range_series",
    "fit",
    "information_criteria",
    "initial_params",
    "negloglik_function",
    "standard_errors",
]

log = logging.getLogger(__name__)

_BAD = 1e300
# loose tolerances for the first pass over all starting points
SCREEN_XTOL = 1e-4
BOUNDARY_TOL = 1e-8
SCREEN_FTOL = 1e-5


@dataclass(frozen=True)
class FitOptions:
    seed: int = 0
    n_start: int = 8
    max_iter: int = 20000
    xtol: float = 1e-8
    ftol: float = 1e-10
    jitter: float = 0.5
    start: ParamVector | None = None
    fixed: dict | None = None
    min_obs_per_param: int = 10
    compute_se: bool = True
    jobs: int = 1


@dataclass
class FitResult:
    spec: ModelSpec
    params: ParamVector
    std_errors: dict[str, float] | None
    llf: float
    aic: float
    bic: float
    lambda_path: LambdaPath
    residuals: Residuals
    regime_path: np.ndarray
    converged: bool
    n_eff: int
    k: int
    message: str = ""
    start_llfs: list[float] = field(default_factory=list)
    n_obs: int = 0

    @property
    def param_dict(self) -> dict[str, float]:
        return self.params.to_dict(self.spec)

    def summary(self) -> str:
        lines = [f"{self.spec.name}  llf={self.llf:.4f}  aic={self.aic:.4f}  bic={self.bic:.4f}"
                 f"  n_eff={self.n_eff}  k={self.k}  converged={self.converged}"]
        for name, value in self.param_dict.items():
            se = None if self.std_errors is None else self.std_errors.get(name)
            se_txt = "   (fixed)" if se is None and self.std_errors is not None else (
                f"  ({se:.4f})" if se is not None and np.isfinite(se) else "  (n/a)")
            lines.append(f"  {name:<12s} {value: .6f}{se_txt}")
        return "\n".join(lines)


def information_criteria(llf: float, k: int, n_eff: int) -> tuple[float, float]:
    if n_eff <= 0:
        raise ValueError("n_eff must be positive")
    return -2.0 * llf + 2.0 * k, -2.0 * llf + k * math.log(n_eff)


def as_range_series(data) -> RangeSeries:
    if isinstance(data, RangeSeries):
        return data
    if isinstance(data, tuple) and len(data) == 2:
        return RangeSeries.from_components(*data)
    return RangeSeries.from_total(np.asarray(data, dtype=float))


class _Objective:
    """Log-likelihood as a function of the flat native parameter vector.

    Branch paths and pre-sample values are computed once, so each call is
    a single compiled pass per modelled series.
    """

    def __init__(self, ranges: RangeSeries, spec: ModelSpec):
        self.spec = spec
        self.ranges = ranges
        self.lognormal = spec.innovation is Innovation.LOGNORMAL
        s = spec.start
        if spec.two_series:
            self.series = [(ranges.ru, ranges.rd), (ranges.rd, ranges.ru)]
            self.branch = np.zeros(len(ranges), dtype=np.int64)
            self.inits = [_init_array(None, ranges.ru, s), _init_array(None, ranges.rd, s)]
        else:
            bp = branch_path(ranges, spec)
            self.series = [(ranges.r, ranges.r)]
            self.branch = np.ascontiguousarray(np.where(bp < 0, 0, bp))
            self.inits = [_init_array(None, ranges.r, s)]
        self.stride = 1 + spec.p + spec.q + spec.n_gamma
        self.theta_pos = spec.n_branches * self.stride
        st = spec.start
        self.tails = []
        for b, (xs, _) in enumerate(self.series):
            tail = xs[st:]
            br = self.branch[st:] if not spec.two_series else np.zeros(len(tail), dtype=np.int64)
            entry = {"x": tail, "branch": br}
            if self.lognormal:
                with np.errstate(divide="ignore"):
                    lx = np.log(tail)
                entry["log_x"] = lx
                entry["const"] = float(np.sum(_LOG_2PI + 2.0 * lx))
                entry["counts"] = np.bincount(br, minlength=spec.n_branches).astype(float)
            self.tails.append(entry)

    def __call__(self, x) -> float:
        x = np.ascontiguousarray(x, dtype=float)
        spec = self.spec
        st = spec.start
        total = 0.0
        for b, (xs, zs) in enumerate(self.series):
            lam = _recursions.cond_mean_flat(
                x, xs, zs, self.branch, b * self.stride, self.stride, spec.p, spec.q, spec.n_gamma,
                st, self.inits[b],
            )[st:]
            np.maximum(lam, LAMBDA_FLOOR, out=lam)
            tail = self.tails[b]
            log_lam = np.log(lam)
            if self.lognormal:
                if spec.two_series:
                    theta = x[self.theta_pos + b : self.theta_pos + b + 1]
                else:
                    theta = x[self.theta_pos :]
                th = theta[tail["branch"]]
                dev = tail["log_x"] - log_lam + 0.5 * th
                total -= 0.5 * (tail["const"] + float(tail["counts"][: len(theta)] @ np.log(theta))
                                + float(np.sum(dev * dev / th)))
            else:
                total -= float(log_lam.sum() + (tail["x"] / lam).sum())
        return total


class _Transform:
    """Map between free unconstrained coordinates and the native parameter vector."""

    def __init__(self, spec: ModelSpec, fixed: dict[str, float] | None):
        self.spec = spec
        names = ParamVector.names(spec)
        self.names = names
        fixed = dict(fixed or {})
        unknown = set(fixed) - set(names)
        if unknown:
            raise KeyError(f"unknown fixed parameters for {spec.name}: {sorted(unknown)}")
        self.fixed_mask = np.array([n in fixed for n in names])
        self.fixed_values = np.array([float(fixed.get(n, 0.0)) for n in names])
        self.free_idx = np.flatnonzero(~self.fixed_mask)
        self.stationary = spec.constraint == "stationary"
        block = 1 + spec.p + spec.q + spec.n_gamma
        self.groups = []  # per branch: (all coef idx, free coef idx, budget)
        positive = []
        for b in range(spec.n_branches):
            base = b * block
            coef = np.arange(base + 1, base + 1 + spec.p + spec.q)
            positive.append(base)
            positive.extend(range(base + 1 + spec.p + spec.q, base + block))
            if self.stationary:
                fixed_sum = float(self.fixed_values[coef][self.fixed_mask[coef]].sum())
                budget = 1.0 - STATIONARITY_MARGIN - fixed_sum
                if budget <= 0:
                    raise ValueError("fixed coefficients already violate stationarity")
                self.groups.append((coef[~self.fixed_mask[coef]], budget))
            else:
                positive.extend(coef)
        positive.extend(range(spec.n_branches * block, spec.n_params))
        self.positive = np.array(sorted(i for i in positive if not self.fixed_mask[i]), dtype=int)
        self.n_free = len(self.free_idx)
        # position of each free native index inside the free vector
        self._slot = {int(i): k for k, i in enumerate(self.free_idx)}
        self._pos_native = self.positive.astype(np.int64)
        self._pos_slot = np.array([self._slot[int(i)] for i in self.positive], dtype=np.int64)
        ptr, gn, gs, budgets = [0], [], [], []
        for idx, budget in self.groups:
            gn.extend(int(i) for i in idx)
            gs.extend(self._slot[int(i)] for i in idx)
            ptr.append(len(gn))
            budgets.append(budget)
        self._grp_ptr = np.array(ptr, dtype=np.int64)
        self._grp_native = np.array(gn, dtype=np.int64)
        self._grp_slot = np.array(gs, dtype=np.int64)
        self._budgets = np.array(budgets, dtype=float)

    def to_native(self, u: np.ndarray) -> np.ndarray:
        return _recursions.free_to_native(
            np.ascontiguousarray(u, dtype=float), self.fixed_values, self._pos_native, self._pos_slot,
            self._grp_ptr, self._grp_native, self._grp_slot, self._budgets,
        )

    def project(self, x: np.ndarray) -> np.ndarray:
        """Move a native vector strictly inside the feasible region."""
        x = np.array(x, dtype=float)
        x[self.fixed_mask] = self.fixed_values[self.fixed_mask]
        for i in self.positive:
            x[i] = max(x[i], 1e-8)
        for idx, budget in self.groups:
            if len(idx) == 0:
                continue
            x[idx] = np.maximum(x[idx], 1e-8)
            total = x[idx].sum()
            if total >= 0.999 * budget:
                x[idx] *= 0.99 * budget / total
        return x

    def to_free(self, x: np.ndarray) -> np.ndarray:
        x = self.project(x)
        u = np.zeros(self.n_free)
        for i in self.positive:
            u[self._slot[int(i)]] = math.log(x[i])
        for idx, budget in self.groups:
            if len(idx) == 0:
                continue
            slack = budget - x[idx].sum()
            for i in idx:
                u[self._slot[int(i)]] = math.log(x[i] / slack)
        return u


def initial_params(ranges: RangeSeries, spec: ModelSpec) -> ParamVector:
    """Default starting values: omega = 0.1 * mean, alpha sum 0.2, beta sum 0.6."""
    from .models import Branch

    branches = []
    if spec.two_series:
        series = [ranges.ru, ranges.rd]
    else:
        series = [ranges.r] * spec.n_branches
    for x in series:
        mean = float(np.mean(x))
        theta2 = None
        if spec.innovation is Innovation.LOGNORMAL:
            pos = x[x > 0]
            theta2 = float(np.var(np.log(pos / mean))) if pos.size > 1 else 0.25
            theta2 = max(theta2, 1e-3)
        gamma = np.full(spec.n_gamma, 0.05 / max(spec.n_gamma, 1))
        branches.append(
            Branch(max(0.1 * mean, 1e-6), np.full(spec.p, 0.2 / spec.p), np.full(spec.q, 0.6 / spec.q), gamma, theta2)
        )
    return ParamVector(tuple(branches))


def negloglik_function(ranges, spec: ModelSpec):
    """Negative log-likelihood of the flat native parameter vector (no validation)."""
    ranges = as_range_series(ranges)
    if spec.family is Family.TARR and spec.threshold is None:
        spec = spec.with_threshold(resolve_threshold(spec, ranges.r))
    obj = _Objective(ranges, spec)
    return lambda x: -obj(np.asarray(x, dtype=float))


def _check_sample(ranges: RangeSeries, spec: ModelSpec, k: int, options: FitOptions) -> int:
    ranges.check_finite()
    n_eff = len(ranges) - spec.start
    if n_eff < options.min_obs_per_param * max(k, 1):
        raise ValueError(
            f"{spec.name}: {n_eff} likelihood terms for {k} free parameters; "
            f"need at least {options.min_obs_per_param} per parameter"
        )
    if spec.innovation is Innovation.LOGNORMAL:
        check = (ranges.ru, ranges.rd) if spec.two_series else (ranges.r,)
        for x in check:
            if np.any(x[spec.start :] <= 0):
                raise ValueError(
                    f"{spec.name}: zero ranges are incompatible with lognormal innovations; "
                    "use exponential innovations or a zero-floor policy"
                )
    return n_eff


def _nelder_mead(fun, u0, options: FitOptions, screen: bool = False):
    if screen:
        xatol, fatol, maxfev = SCREEN_XTOL, SCREEN_FTOL, min(options.max_iter, 200 * len(u0))
    else:
        xatol, fatol, maxfev = options.xtol, options.ftol, options.max_iter
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return minimize(
            fun,
            u0,
            method="Nelder-Mead",
            options={
                "xatol": xatol,
                "fatol": fatol,
                "maxfev": maxfev,
                "maxiter": maxfev,
                "adaptive": len(u0) > 4,
            },
        )


def fit(data, spec: ModelSpec, options: FitOptions | None = None, **kwargs) -> FitResult:
    """Maximum-likelihood fit of ``spec`` to ``data``.

    ``data`` is a :class:`RangeSeries`, a ``(ru, rd)`` tuple, or a plain
    array of total ranges. Keyword arguments override fields of
    ``options``. Returns the best optimum over all starts; a run whose
    polished optimum did not meet the tolerances is flagged
    ``converged=False`` rather than raised.
    """
    options = replace(options or FitOptions(), **kwargs)
    ranges = as_range_series(data)
    if spec.family is Family.TARR and spec.threshold is None:
        spec = spec.with_threshold(resolve_threshold(spec, ranges.r))
    tr = _Transform(spec, options.fixed)
    k = tr.n_free
    n_eff = _check_sample(ranges, spec, k, options)
    obj = _Objective(ranges, spec)

    def f(u):
        val = obj(tr.to_native(u))
        return -val if math.isfinite(val) else _BAD

    base = options.start if options.start is not None else initial_params(ranges, spec)
    if len(base.branches) != spec.n_branches:
        raise ValueError("start parameters do not match the model spec")
    x0 = tr.project(base.to_array())
    starts = [x0]
    rng = np.random.default_rng(options.seed)
    for _ in range(1, max(options.n_start, 1)):
        mult = rng.uniform(1 - options.jitter, 1 + options.jitter, size=x0.size)
        starts.append(tr.project(x0 * mult))

    def run(x):
        return _nelder_mead(f, tr.to_free(x), options, screen=len(starts) > 1)

    if options.jobs > 1 and len(starts) > 1:
        with ThreadPoolExecutor(options.jobs) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(x) for x in starts]
    start_llfs = [-float(r.fun) for r in results]
    best = min(range(len(results)), key=lambda i: (results[i].fun, i))
    polished = _nelder_mead(f, results[best].x, options)
    if polished.fun > results[best].fun:
        polished = results[best]
    # a fresh simplex at the optimum guards against premature simplex collapse
    check = _nelder_mead(f, polished.x, options)
    final = check if check.fun < polished.fun else polished
    gain = polished.fun - check.fun
    converged = bool(check.success) and gain <= max(1e-6, 1e-9 * abs(check.fun))
    message = str(check.message)
    if not converged:
        log.warning("%s: optimiser did not converge (%s, restart gain %.3g)", spec.name, message, gain)

    x_hat = tr.to_native(final.x)
    params = ParamVector.from_array(spec, x_hat)
    llf = -float(final.fun)
    aic, bic = information_criteria(llf, k, n_eff)
    path = conditional_mean(ranges, params, spec, validate=False)
    result = FitResult(
        spec=spec,
        params=params,
        std_errors=None,
        llf=llf,
        aic=aic,
        bic=bic,
        lambda_path=path,
        residuals=standardized_residuals(ranges.r, path),
        regime_path=path.branch.copy(),
        converged=converged,
        n_eff=n_eff,
        k=k,
        message=message,
        start_llfs=start_llfs,
        n_obs=len(ranges),
    )
    if options.compute_se:
        result.std_errors = standard_errors(result, ranges, fixed=options.fixed)
    return result


def numerical_hessian(fun, x: np.ndarray, rel_step: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian with per-coordinate step ``rel_step * |x_i|``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    h = rel_step * np.where(np.abs(x) > 0, np.abs(x), 1e-4)
    f0 = fun(x)
    hess = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        hess[i, i] = (fun(x + ei) - 2.0 * f0 + fun(x - ei)) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(n)
            ej[j] = h[j]
            v = (fun(x + ei + ej) - fun(x + ei - ej) - fun(x - ei + ej) + fun(x - ei - ej)) / (4.0 * h[i] * h[j])
            hess[i, j] = hess[j, i] = v
    return hess


def standard_errors(fit_result: FitResult, data, fixed: dict | None = None, rel_step: float = 1e-4):
    """Standard errors from the inverse numerical Hessian of the negative log-likelihood.

    Returns ``None`` (and logs why) when the Hessian is not positive
    definite. Fixed parameters are left out of the returned mapping.
    Estimates sitting on the zero boundary get ``nan`` and are held fixed
    while the remaining block is differentiated.
    """
    ranges = as_range_series(data)
    spec = fit_result.spec
    obj = _Objective(ranges, spec)
    names = ParamVector.names(spec)
    x_hat = fit_result.params.to_array()
    estimated = [i for i, n in enumerate(names) if not (fixed and n in fixed)]
    at_bound = [i for i in estimated if abs(x_hat[i]) < BOUNDARY_TOL]
    if at_bound:
        log.info("%s: %s at the boundary; no standard error", spec.name, [names[i] for i in at_bound])
    free = [i for i in estimated if i not in at_bound]

    def nll(z):
        x = x_hat.copy()
        x[free] = z
        val = obj(x)
        return -val if math.isfinite(val) else _BAD

    hess = numerical_hessian(nll, x_hat[free], rel_step)
    if not np.all(np.isfinite(hess)):
        log.warning("%s: Hessian has non-finite entries; standard errors unavailable", spec.name)
        return None
    hess = 0.5 * (hess + hess.T)
    try:
        chol = np.linalg.cholesky(hess)
    except np.linalg.LinAlgError:
        log.warning("%s: Hessian is not positive definite; standard errors unavailable", spec.name)
        return None
    inv_chol = np.linalg.inv(chol)
    cov = inv_chol.T @ inv_chol
    se = np.sqrt(np.diag(cov))
    out = {names[i]: float(v) for i, v in zip(free, se)}
    out.update({names[i]: float("nan") for i in at_bound})
    return {names[i]: out[names[i]] for i in estimated}
