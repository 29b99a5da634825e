"""Conditional log-likelihoods for exponential and mean-one lognormal innovations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _recursions
from .models import Innovation, LambdaPath, ModelSpec, ParamVector, conditional_mean, _two_series
from .ranges import RangeSeries

__all__ = [
    "Residuals",
    "loglik_exponential",
    "loglik_lognormal",
    "model_loglik",
    "standardized_residuals",
]


def _as_array(ranges) -> np.ndarray:
    if isinstance(ranges, RangeSeries):
        return ranges.r
    return np.ascontiguousarray(ranges, dtype=float)


def loglik_exponential(ranges, path: LambdaPath) -> float:
    """``-sum(log(lam_t) + R_t / lam_t)`` over ``t >= path.start``."""
    r = _as_array(ranges)
    if len(r) != len(path.lam):
        raise ValueError("range series and lambda path differ in length")
    if np.any(path.values <= 0):
        raise ValueError("conditional mean must be strictly positive")
    return float(_recursions.exp_loglik(r, path.lam, path.start))


def loglik_lognormal(ranges, path: LambdaPath, theta2_by_regime, regime=None) -> float:
    """Lognormal log-likelihood with ``log(eps) ~ N(-theta2/2, theta2)``.

    ``theta2_by_regime`` is indexed by the regime/branch id found in
    ``regime`` (defaults to ``path.branch``); a scalar means one law for all
    periods.
    """
    r = _as_array(ranges)
    if len(r) != len(path.lam):
        raise ValueError("range series and lambda path differ in length")
    theta2 = np.atleast_1d(np.asarray(theta2_by_regime, dtype=float))
    if np.any(~np.isfinite(theta2)) or np.any(theta2 <= 0):
        raise ValueError(f"theta2 must be positive, got {theta2}")
    s = path.start
    if np.any(r[s:] <= 0):
        raise ValueError(
            "lognormal likelihood needs strictly positive ranges; apply a zero-range policy "
            "(e.g. the CLI --zero-floor option) first"
        )
    if np.any(path.values <= 0):
        raise ValueError("conditional mean must be strictly positive")
    branch = path.branch if regime is None else np.asarray(regime)
    branch = np.ascontiguousarray(np.where(branch < 0, 0, branch), dtype=np.int64)
    if theta2.size == 1:
        branch = np.zeros_like(branch)
    elif branch[s:].max(initial=0) >= theta2.size:
        raise ValueError("regime index exceeds the number of theta2 values")
    return float(_recursions.lognormal_loglik(r, path.lam, branch, theta2, s))


@dataclass
class Residuals:
    """Standardised residuals ``R_t / lam_t`` for ``t >= start`` with their regime labels."""

    values: np.ndarray
    regime: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def by_regime(self, regime: int) -> np.ndarray:
        return self.values[self.regime == regime]


def standardized_residuals(ranges, path: LambdaPath) -> Residuals:
    r = _as_array(ranges)
    if np.any(path.values <= 0):
        raise ValueError("conditional mean must be strictly positive")
    s = path.start
    return Residuals(r[s:] / path.lam[s:], np.asarray(path.branch[s:]).copy())


def model_loglik(ranges: RangeSeries, params: ParamVector, spec: ModelSpec, init=None, validate=True) -> float:
    """Log-likelihood of any family member at ``params``.

    ACARR/FACARR contribute one likelihood per direction, evaluated on the
    upward and downward series respectively.
    """
    lognormal = spec.innovation is Innovation.LOGNORMAL
    if spec.two_series:
        paths = _two_series(ranges, params, spec, init, validate)
        total = 0.0
        for b, (x, path) in enumerate(zip((ranges.ru, ranges.rd), paths)):
            if lognormal:
                total += loglik_lognormal(x, path, params.branches[b].theta2)
            else:
                total += loglik_exponential(x, path)
        return total
    path = conditional_mean(ranges, params, spec, init, validate)
    if lognormal:
        return loglik_lognormal(ranges.r, path, params.theta2)
    return loglik_exponential(ranges.r, path)
