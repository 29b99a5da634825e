import math

import numpy as np
import pytest

from tacarr.estimation import FitOptions, fit
from tacarr.forecasting import accuracy, insample_accuracy, one_step_forecast, rolling_forecast
from tacarr.models import Branch, ModelSpec, ParamVector, conditional_mean
from tacarr.ranges import RangeObs, RangeSeries
from tacarr.simulation import SimConfig, simulate_path

LN = ModelSpec.parse("LNTACARR(1,1,1)")
LN_TRUE = ParamVector.tacarr((0.02, 0.1, 0.5), (0.8, 0.3, 0.5), (0.05, 0.05))


@pytest.fixture(scope="module")
def path():
    return simulate_path(SimConfig(LN, LN_TRUE, T=700, seed=4))


def test_accuracy_by_hand():
    rmse, mae = accuracy([1.0, 2.0, 3.0], [1.0, 1.0, 5.0])
    assert rmse == pytest.approx(math.sqrt(5 / 3))
    assert mae == pytest.approx(1.0)
    with pytest.raises(ValueError):
        accuracy([], [])


def test_one_step_tacarr_by_hand():
    # last day: ru < rd -> Down regime for l = 1
    rs = RangeSeries.from_components([0.3, 0.6, 0.2], [0.4, 0.2, 0.5])
    pv = ParamVector.tacarr((0.1, 0.2, 0.5), (0.3, 0.4, 0.2))
    lam = conditional_mean(rs, pv, ModelSpec.parse("ETACARR(1,1,1)")).lam
    f = one_step_forecast(pv, rs, ModelSpec.parse("ETACARR(1,1,1)"))
    assert f == pytest.approx(0.3 + 0.4 * rs.r[-1] + 0.2 * lam[-1], abs=1e-14)


def test_one_step_uses_last_l_days():
    # l = 3 counts over the last three days only
    ru = [0.9, 0.9, 0.1, 0.9, 0.1]
    rd = [0.1, 0.1, 0.9, 0.1, 0.9]
    rs = RangeSeries.from_components(ru, rd)
    spec = ModelSpec.parse("ETACARR(3,1,1)")
    pv = ParamVector.tacarr((0.1, 0.2, 0.5), (0.3, 0.4, 0.2))
    lam = conditional_mean(rs, pv, spec).lam
    # days 2..4: down, up, down -> Down
    assert one_step_forecast(pv, rs, spec) == pytest.approx(0.3 + 0.4 * rs.r[-1] + 0.2 * lam[-1], abs=1e-14)


def test_one_step_matches_appended_recursion(path):
    rs = path.ranges[:400]
    res = fit(rs, LN, FitOptions(compute_se=False))
    f = one_step_forecast(res, rs)
    longer = path.ranges[:401]
    lam = conditional_mean(longer, res.params, LN, init=float(np.mean(rs.r))).lam
    assert f == pytest.approx(lam[-1], rel=1e-13)


def test_one_step_two_series_sums_directions():
    rng = np.random.default_rng(0)
    rs = RangeSeries.from_components(rng.exponential(size=50), rng.exponential(size=50))
    spec = ModelSpec.parse("ACARR(1,1)")
    pv = ParamVector((Branch(0.02, [0.1], [0.7]), Branch(0.03, [0.2], [0.6])))
    padded = rs.append(RangeObs(0.0, 0.0, 0.0))
    # pre-sample values are the window means, not the means of the padded series
    init = (float(rs.ru.mean()), float(rs.rd.mean()))
    expect = conditional_mean(padded, pv, spec, init=init).lam[-1]
    assert one_step_forecast(pv, rs, spec) == pytest.approx(expect, rel=1e-13)


def test_one_step_needs_history():
    pv = ParamVector.tacarr((0.1, 0.2, 0.5), (0.3, 0.4, 0.2))
    with pytest.raises(ValueError):
        one_step_forecast(pv, RangeSeries.from_total([1.0, 1.0]), ModelSpec.parse("ETACARR(5,1,1)"))
    with pytest.raises(ValueError):
        one_step_forecast(pv, RangeSeries.from_total([1.0, 1.0]))


def test_rolling_forecast_fixed_parameters_equal_recursion(path):
    # refit_every=None fits once; forecasts then equal the fixed-parameter recursion on each window
    N = 600
    run = rolling_forecast(path.ranges, LN, N, refit_every=None, options=FitOptions(compute_se=False),
                           keep_fits=True)
    assert run.n_forecasts == 100 and len(run.fits) == 1
    np.testing.assert_array_equal(run.realized, path.ranges.r[N:])
    params = run.fits[0].params
    for k in (0, 17, 99):
        window = path.ranges[k : k + N]
        assert run.forecasts[k] == pytest.approx(one_step_forecast(params, window, LN), rel=1e-12)


def test_rolling_forecast_refit_schedule(path):
    run = rolling_forecast(path.ranges[:640], LN, 600, refit_every=10,
                           options=FitOptions(compute_se=False, n_start=2), keep_fits=True)
    assert len(run.fits) == 4
    assert run.regimes.min() >= 0 and run.regimes.max() <= 1
    assert np.all(run.converged)
    lines = run.to_csv().splitlines()
    assert lines[0] == "date,realized,forecast,regime,converged" and len(lines) == 41
    assert float(lines[1].split(",")[2]) == run.forecasts[0]


def test_rolling_forecast_deterministic(path):
    opts = FitOptions(compute_se=False, n_start=2)
    a = rolling_forecast(path.ranges[:620], LN, 600, refit_every=5, options=opts)
    b = rolling_forecast(path.ranges[:620], LN, 600, refit_every=5, options=opts)
    assert a.to_csv() == b.to_csv()


def test_rolling_forecast_bad_window(path):
    with pytest.raises(ValueError):
        rolling_forecast(path.ranges[:10], LN, 10)


def test_correct_model_beats_carr_out_of_sample():
    spec_true = LN
    p = simulate_path(SimConfig(spec_true, LN_TRUE, T=1100, seed=21))
    opts = FitOptions(compute_se=False, n_start=2)
    tac = rolling_forecast(p.ranges, spec_true, 1000, refit_every=None, options=opts)
    carr = rolling_forecast(p.ranges, ModelSpec.parse("LNCARR(1,1)"), 1000, refit_every=None, options=opts)
    assert tac.rmse < carr.rmse


def test_insample_accuracy(path):
    res = fit(path.ranges, LN, FitOptions(compute_se=False))
    rmse, mae = insample_accuracy(res, path.ranges)
    lam = res.lambda_path.lam[1:]
    assert rmse == pytest.approx(math.sqrt(np.mean((path.ranges.r[1:] - lam) ** 2)))
    assert mae <= rmse
