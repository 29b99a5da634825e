import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tacarr.ranges import (
    NO_REGIME,
    PriceBar,
    RangeObs,
    RangeSeries,
    Regime,
    RegimeCounts,
    classify_regime,
    extract_ranges,
    regime_counts,
    regime_path,
)

from oracles import regime_oracle


def test_extract_single_bar_by_hand():
    bar = PriceBar(100.0, 102.0, 99.0, 101.0)
    rs = extract_ranges([bar])
    assert rs.ru[0] == pytest.approx(100 * math.log(102 / 100), abs=1e-12)
    assert rs.rd[0] == pytest.approx(100 * math.log(100 / 99), abs=1e-12)
    assert rs.r[0] == pytest.approx(100 * math.log(102 / 99), abs=1e-12)


def test_flat_bar_gives_zero_ranges():
    rs = extract_ranges([PriceBar(50.0, 50.0, 50.0, 50.0)])
    assert rs.r[0] == rs.ru[0] == rs.rd[0] == 0.0


def test_scale_is_linear():
    bars = [PriceBar(10.0, 11.0, 9.5, 10.2), PriceBar(10.2, 10.3, 9.9, 10.0)]
    a = extract_ranges(bars, scale=1.0)
    b = extract_ranges(bars, scale=100.0)
    np.testing.assert_allclose(b.r, 100 * a.r, rtol=1e-14)


@pytest.mark.parametrize(
    "bar",
    [
        PriceBar(100.0, 99.0, 101.0, 100.0),   # high < low
        PriceBar(100.0, 101.0, 99.0, 102.0),   # close above high
        PriceBar(0.0, 1.0, 0.0, 0.5),          # non-positive
        PriceBar(float("nan"), 1.0, 0.5, 0.7),
    ],
)
def test_invalid_bars_rejected(bar):
    with pytest.raises(ValueError):
        extract_ranges([bar])


def test_dates_carried_through():
    d = [dt.date(2020, 1, 2), dt.date(2020, 1, 3)]
    bars = [PriceBar(1.0, 1.1, 0.9, 1.0, d[0]), PriceBar(1.0, 1.2, 0.95, 1.1, d[1])]
    assert extract_ranges(bars).dates == d


@settings(max_examples=200, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(0.5, 2000), st.floats(0, 0.2), st.floats(0, 0.2), st.floats(0, 1)
        ),
        min_size=1,
        max_size=40,
    )
)
def test_decomposition_identity(rows):
    bars = []
    for o, up, down, u in rows:
        hi, lo = o * math.exp(up), o * math.exp(-down)
        bars.append(PriceBar(o, hi, lo, min(max(lo + u * (hi - lo), lo), hi)))
    rs = extract_ranges(bars)
    assert np.all(rs.ru >= 0) and np.all(rs.rd >= 0)
    np.testing.assert_allclose(rs.r, rs.ru + rs.rd, rtol=0, atol=1e-12)


def test_regime_tie_goes_up():
    # l = 2: one up day and one down day -> tie -> Up
    hist = [RangeObs(1.0, 0.7, 0.3), RangeObs(1.0, 0.2, 0.8)]
    assert classify_regime(hist, 2) is Regime.UP
    # a day with ru == rd counts as up
    assert classify_regime([RangeObs(1.0, 0.5, 0.5)], 1) is Regime.UP
    assert classify_regime([RangeObs(1.0, 0.4, 0.6)], 1) is Regime.DOWN


def test_regime_counts_by_hand():
    rs = RangeSeries.from_components([0.9, 0.9, 0.1], [0.1, 0.1, 0.9])
    c = regime_counts(rs, 3)
    assert (c.cu, c.cd) == (2, 1)
    assert c.regime is Regime.UP


def test_regime_counts_errors():
    with pytest.raises(ValueError):
        regime_counts([RangeObs(1, 0.5, 0.5)], 2)
    with pytest.raises(ValueError):
        regime_counts([RangeObs(1, 0.5, 0.5)], 0)
    with pytest.raises(ValueError):
        RegimeCounts(1, 1, 3)


@pytest.mark.parametrize("l", [1, 2, 5, 22])
def test_regime_path_matches_oracle(l):
    rng = np.random.default_rng(l)
    ru = rng.exponential(size=300)
    rd = rng.exponential(size=300)
    rd[::7] = ru[::7]  # exact ties
    path = regime_path(RangeSeries.from_components(ru, rd), l)
    assert np.all(path[:l] == NO_REGIME)
    expect = [regime_oracle(ru, rd, t, l) for t in range(l, 300)]
    np.testing.assert_array_equal(path[l:], expect)


def test_range_series_slicing_and_append():
    rs = RangeSeries.from_components([1.0, 2.0, 3.0], [0.5, 0.5, 0.5], dates=["a", "b", "c"])
    sub = rs[1:]
    assert len(sub) == 2 and sub.dates == ["b", "c"]
    sub.r[0] = -1
    assert rs.r[1] == 2.5
    longer = rs.append(RangeObs(1.0, 0.5, 0.5), "d")
    assert len(longer) == 4 and len(rs) == 3
    assert isinstance(rs[0], RangeObs)


def test_check_finite():
    with pytest.raises(FloatingPointError):
        RangeSeries.from_components([1.0, np.inf], [0.5, 0.5]).check_finite()
    with pytest.raises(ValueError):
        RangeSeries.from_total([1.0, -1.0]).check_finite()
