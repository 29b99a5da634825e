import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tacarr.likelihood import (
    loglik_exponential,
    loglik_lognormal,
    model_loglik,
    standardized_residuals,
)
from tacarr.models import Branch, LambdaPath, ModelSpec, ParamVector, lambda_acarr, lambda_tacarr
from tacarr.ranges import RangeSeries

from oracles import exp_loglik_oracle, lognormal_loglik_oracle


def _path(lam, start=0, branch=None):
    lam = np.asarray(lam, dtype=float)
    branch = np.zeros(len(lam), dtype=np.int64) if branch is None else np.asarray(branch, dtype=np.int64)
    return LambdaPath(lam, branch, start)


def test_exponential_single_point_by_hand():
    # log f = -log(2) - 3/2
    assert loglik_exponential([3.0], _path([2.0])) == pytest.approx(-math.log(2) - 1.5, abs=1e-15)


def test_lognormal_single_point_by_hand():
    r, lam, th = 1.5, 1.2, 0.3
    expect = -0.5 * (math.log(2 * math.pi * th) + 2 * math.log(r) + (math.log(r) - math.log(lam) + th / 2) ** 2 / th)
    assert loglik_lognormal([r], _path([lam]), th) == pytest.approx(expect, abs=1e-14)


def test_lognormal_mean_is_lambda():
    # E[R] under the law equals lam: integrate x f(x)
    from scipy import integrate

    lam, th = 1.7, 0.4
    f = lambda x: x * math.exp(loglik_lognormal([x], _path([lam]), th))
    val, _ = integrate.quad(f, 0, np.inf, limit=200)
    assert val == pytest.approx(lam, rel=1e-7)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_exponential_matches_density_sum(seed):
    rng = np.random.default_rng(seed)
    x = rng.exponential(1.0, 30)
    lam = rng.uniform(0.05, 3.0, 30)
    start = int(rng.integers(0, 5))
    got = loglik_exponential(x, _path(lam, start))
    assert abs(got - exp_loglik_oracle(x, lam, start)) < 1e-10


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_lognormal_matches_density_sum(seed):
    rng = np.random.default_rng(seed)
    x = rng.lognormal(0.0, 0.7, 30)
    lam = rng.uniform(0.05, 3.0, 30)
    branch = rng.integers(0, 2, 30)
    th = rng.uniform(0.05, 1.5, 2)
    start = int(rng.integers(0, 5))
    got = loglik_lognormal(x, _path(lam, start, branch), th)
    assert abs(got - lognormal_loglik_oracle(x, lam, th[branch], start)) < 1e-10


def test_lognormal_explicit_regime_argument():
    rng = np.random.default_rng(3)
    x, lam = rng.lognormal(size=20), rng.uniform(0.5, 2, 20)
    reg = np.array([0, 1] * 10)
    th = np.array([0.2, 0.9])
    a = loglik_lognormal(x, _path(lam), th, regime=reg)
    assert a == pytest.approx(lognormal_loglik_oracle(x, lam, th[reg], 0), abs=1e-10)


@pytest.mark.parametrize(
    "call",
    [
        lambda: loglik_exponential([1.0, 2.0], _path([1.0, 0.0])),
        lambda: loglik_lognormal([1.0, 2.0], _path([1.0, 1.0]), 0.0),
        lambda: loglik_lognormal([1.0, 0.0], _path([1.0, 1.0]), 0.3),
        lambda: loglik_lognormal([1.0, 2.0], _path([1.0, -1.0]), 0.3),
        lambda: loglik_exponential([1.0], _path([1.0, 1.0])),
    ],
)
def test_domain_errors(call):
    with pytest.raises(ValueError):
        call()


def test_zero_range_before_start_is_ignored():
    assert np.isfinite(loglik_lognormal([0.0, 1.0], _path([1.0, 1.0], start=1), 0.3))


def test_exponential_maximised_at_lambda_equal_r():
    # pointwise: d/dlam (-log lam - r/lam) = 0 at lam = r
    r = np.array([0.7])
    vals = [loglik_exponential(r, _path([v])) for v in (0.6, 0.7, 0.8)]
    assert vals[1] > vals[0] and vals[1] > vals[2]


def test_model_loglik_tacarr_matches_components():
    rng = np.random.default_rng(5)
    rs = RangeSeries.from_components(rng.exponential(0.5, 200), rng.exponential(0.5, 200))
    spec = ModelSpec.parse("LNTACARR(1,1,1)")
    pv = ParamVector.tacarr((0.05, 0.15, 0.7), (0.1, 0.2, 0.6), (0.3, 0.5))
    path = lambda_tacarr(rs, pv, spec)
    expect = lognormal_loglik_oracle(rs.r, path.lam, np.array([0.3, 0.5])[np.maximum(path.branch, 0)], 1)
    assert model_loglik(rs, pv, spec) == pytest.approx(expect, abs=1e-9)


def test_model_loglik_acarr_sums_directions():
    rng = np.random.default_rng(6)
    rs = RangeSeries.from_components(rng.exponential(0.5, 200), rng.exponential(0.5, 200))
    spec = ModelSpec.parse("ACARR(1,1)")
    pv = ParamVector((Branch(0.02, [0.1], [0.7]), Branch(0.03, [0.2], [0.6])))
    u, d = lambda_acarr(rs, pv, spec)
    expect = exp_loglik_oracle(rs.ru, u.lam, 1) + exp_loglik_oracle(rs.rd, d.lam, 1)
    assert model_loglik(rs, pv, spec) == pytest.approx(expect, abs=1e-9)


def test_standardized_residuals():
    rs = RangeSeries.from_total([1.0, 2.0, 3.0])
    res = standardized_residuals(rs.r, _path([1.0, 4.0, 1.5], start=1, branch=[-1, 0, 1]))
    np.testing.assert_array_equal(res.values, [0.5, 2.0])
    np.testing.assert_array_equal(res.by_regime(1), [2.0])
