"""Price bars, range decomposition and up/down market regimes.

Ranges are expressed as ``scale`` times natural-log price differences
(``scale=100`` gives percent-log units). The total range splits exactly
into an upward part (high over open) and a downward part (open over low).
"""
from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DEFAULT_SCALE",
    "NO_REGIME",
    "PriceBar",
    "RangeObs",
    "RangeSeries",
    "Regime",
    "RegimeCounts",
    "classify_regime",
    "extract_ranges",
    "regime_counts",
    "regime_path",
]

DEFAULT_SCALE = 100.0
NO_REGIME = -1


class Regime(IntEnum):
    """Market state. The integer value doubles as the parameter-branch index."""

    UP = 0
    DOWN = 1

    def __str__(self) -> str:
        return "U" if self is Regime.UP else "D"


@dataclass(frozen=True)
class PriceBar:
    open: float
    high: float
    low: float
    close: float
    timestamp: _dt.date | None = None

    def validate(self, label: str | int | None = None) -> None:
        where = f" (bar {label})" if label is not None else ""
        for name in ("open", "high", "low", "close"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"non-positive or non-finite {name} price {value!r}{where}")
        if self.high < self.low:
            raise ValueError(f"high {self.high} is below low {self.low}{where}")
        if self.low > min(self.open, self.close) or self.high < max(self.open, self.close):
            raise ValueError(
                f"open/close outside [low, high]: o={self.open} h={self.high} "
                f"l={self.low} c={self.close}{where}"
            )


@dataclass(frozen=True)
class RangeObs:
    r: float
    ru: float
    rd: float


@dataclass(frozen=True)
class RegimeCounts:
    cu: int
    cd: int
    l: int

    def __post_init__(self) -> None:
        if self.l < 1 or self.cu < 0 or self.cd < 0 or self.cu + self.cd != self.l:
            raise ValueError(f"inconsistent regime counts cu={self.cu} cd={self.cd} l={self.l}")

    @property
    def regime(self) -> Regime:
        return Regime.UP if self.cu >= self.cd else Regime.DOWN


class RangeSeries:
    """Ordered range observations stored column-wise as float arrays.

    Indexing with an integer returns a :class:`RangeObs`; slicing returns a
    new :class:`RangeSeries` sharing no memory with the original.
    """

    def __init__(self, r, ru, rd, dates: Sequence | None = None):
        self.r = np.ascontiguousarray(r, dtype=float)
        self.ru = np.ascontiguousarray(ru, dtype=float)
        self.rd = np.ascontiguousarray(rd, dtype=float)
        if not (self.r.ndim == self.ru.ndim == self.rd.ndim == 1):
            raise ValueError("range components must be one-dimensional")
        if not (len(self.r) == len(self.ru) == len(self.rd)):
            raise ValueError("range components must have equal length")
        if dates is not None and len(dates) != len(self.r):
            raise ValueError("dates must match the number of observations")
        self.dates = list(dates) if dates is not None else None

    @classmethod
    def from_total(cls, r, dates=None) -> "RangeSeries":
        """Series carrying only the total range; up/down split is unknown (set to half each)."""
        r = np.asarray(r, dtype=float)
        return cls(r, 0.5 * r, r - 0.5 * r, dates)

    @classmethod
    def from_components(cls, ru, rd, dates=None) -> "RangeSeries":
        ru = np.asarray(ru, dtype=float)
        rd = np.asarray(rd, dtype=float)
        return cls(ru + rd, ru, rd, dates)

    def __len__(self) -> int:
        return len(self.r)

    def __getitem__(self, key):
        if isinstance(key, slice):
            dates = self.dates[key] if self.dates is not None else None
            return RangeSeries(self.r[key].copy(), self.ru[key].copy(), self.rd[key].copy(), dates)
        return RangeObs(float(self.r[key]), float(self.ru[key]), float(self.rd[key]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __repr__(self) -> str:
        return f"RangeSeries(n={len(self)}, mean_r={self.r.mean() if len(self) else float('nan'):.4f})"

    def append(self, obs: RangeObs, date=None) -> "RangeSeries":
        dates = None if self.dates is None else self.dates + [date]
        return RangeSeries(
            np.append(self.r, obs.r), np.append(self.ru, obs.ru), np.append(self.rd, obs.rd), dates
        )

    def check_finite(self) -> None:
        for name in ("r", "ru", "rd"):
            values = getattr(self, name)
            if not np.all(np.isfinite(values)):
                raise FloatingPointError(f"non-finite values in range component {name!r}")
            if np.any(values < 0):
                raise ValueError(f"negative values in range component {name!r}")


def extract_ranges(bars: Iterable[PriceBar], scale: float = DEFAULT_SCALE) -> RangeSeries:
    """Convert price bars to (range, upward range, downward range) triples."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale!r}")
    bars = list(bars)
    for i, bar in enumerate(bars):
        bar.validate(label=bar.timestamp if bar.timestamp is not None else i)
    if not bars:
        return RangeSeries(np.empty(0), np.empty(0), np.empty(0), [])
    o = np.log([b.open for b in bars])
    h = np.log([b.high for b in bars])
    lo = np.log([b.low for b in bars])
    ru = scale * (h - o)
    rd = scale * (o - lo)
    dates = [b.timestamp for b in bars]
    return RangeSeries(ru + rd, ru, rd, dates if any(d is not None for d in dates) else None)


def regime_counts(history: RangeSeries | Sequence[RangeObs], l: int) -> RegimeCounts:
    if l < 1:
        raise ValueError(f"window length l must be >= 1, got {l}")
    if isinstance(history, RangeSeries):
        ru, rd = history.ru, history.rd
    else:
        ru = np.array([h.ru for h in history], dtype=float)
        rd = np.array([h.rd for h in history], dtype=float)
    if len(ru) != l:
        raise ValueError(f"history must hold exactly l={l} observations, got {len(ru)}")
    cu = int(np.count_nonzero(ru >= rd))
    return RegimeCounts(cu=cu, cd=l - cu, l=l)


def classify_regime(history: RangeSeries | Sequence[RangeObs], l: int) -> Regime:
    """Regime implied by the last ``l`` observations (oldest first).

    Days with ``ru == rd`` count as up days, and a tied count resolves to
    :attr:`Regime.UP`.
    """
    return regime_counts(history, l).regime


def regime_path(ranges: RangeSeries, l: int) -> np.ndarray:
    """Regime index at every position, using the ``l`` preceding observations.

    Positions ``0..l-1`` have no complete history and hold ``NO_REGIME``.
    """
    if l < 1:
        raise ValueError(f"window length l must be >= 1, got {l}")
    n = len(ranges)
    if n < l:
        raise ValueError(f"series of length {n} is shorter than the window l={l}")
    up_day = (ranges.ru >= ranges.rd).astype(np.int64)
    csum = np.concatenate(([0], np.cumsum(up_day)))
    out = np.full(n, NO_REGIME, dtype=np.int8)
    if n > l:
        cu = csum[l:n] - csum[0 : n - l]
        out[l:] = np.where(2 * cu >= l, Regime.UP, Regime.DOWN)
    return out
