"""CSV ingestion and emission for price bars, range series and fitted paths.

All floats are written with ``repr`` so a file read back reproduces the
in-memory arrays bit for bit.
"""
from __future__ import annotations

import csv
import datetime as _dt
import io
import math

import numpy as np
from scipy import stats

from .diagnostics import acf, ljung_box
from .models import Innovation, LambdaPath, ModelSpec
from .ranges import DEFAULT_SCALE, PriceBar, RangeSeries, extract_ranges

__all__ = [
    "DEFAULT_COLUMNS",
    "acf_table",
    "DataError",
    "apply_zero_floor",
    "ingest_csv",
    "lambda_csv",
    "load_series",
    "ranges_csv",
    "read_lambda_csv",
    "read_ranges_csv",
    "summary_statistics",
]

DEFAULT_COLUMNS = {"date": "date", "open": "open", "high": "high", "low": "low", "close": "close"}
RANGE_COLUMNS = ("date", "r", "ru", "rd")


class DataError(ValueError):
    """Malformed input file; the message names the offending line or column."""


def _parse_date(text: str) -> _dt.date:
    try:
        return _dt.date.fromisoformat(text.strip()[:10])
    except ValueError:
        raise ValueError(f"unparsable date {text!r} (expected YYYY-MM-DD)") from None


def _fmt_date(d) -> str:
    return d.isoformat() if isinstance(d, _dt.date) else str(d)


def _read_rows(path) -> tuple[list[str], list[tuple[int, dict]]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise DataError(f"{path}: empty file or missing header")
            header = [h.strip() for h in reader.fieldnames]
            reader.fieldnames = header
            rows = [(reader.line_num, row) for row in reader]
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise DataError(f"{path}: cannot read CSV ({exc})") from exc
    return header, rows


def _float_cell(row: dict, col: str, line: int, path) -> float:
    raw = row.get(col)
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise DataError(f"{path}:{line}: column {col!r} is not numeric ({raw!r})") from None
    return value


def ingest_csv(path, columns: dict[str, str] | None = None, start=None, end=None) -> list[PriceBar]:
    """Read OHLC bars sorted by date; invalid bars and duplicate dates are rejected."""
    cols = {**DEFAULT_COLUMNS, **(columns or {})}
    header, rows = _read_rows(path)
    missing = [cols[k] for k in ("date", "open", "high", "low", "close") if cols[k] not in header]
    if missing:
        raise DataError(f"{path}: missing column(s) {missing}; header is {header}")
    bars = []
    seen: dict[_dt.date, int] = {}
    for line, row in rows:
        try:
            date = _parse_date(row[cols["date"]] or "")
        except ValueError as exc:
            raise DataError(f"{path}:{line}: {exc}") from None
        if date in seen:
            raise DataError(f"{path}:{line}: duplicate date {date} (first seen on line {seen[date]})")
        seen[date] = line
        if (start is not None and date < start) or (end is not None and date > end):
            continue
        bar = PriceBar(*(_float_cell(row, cols[k], line, path) for k in ("open", "high", "low", "close")), date)
        try:
            bar.validate()
        except ValueError as exc:
            raise DataError(f"{path}:{line}: {exc}") from None
        bars.append(bar)
    bars.sort(key=lambda b: b.timestamp)
    return bars


def read_ranges_csv(path, start=None, end=None) -> RangeSeries:
    """Read a ``date,r,ru,rd`` file as written by :func:`ranges_csv`."""
    header, rows = _read_rows(path)
    missing = [c for c in RANGE_COLUMNS if c not in header]
    if missing:
        raise DataError(f"{path}: missing column(s) {missing}")
    recs = []
    seen = set()
    for line, row in rows:
        try:
            date = _parse_date(row["date"] or "")
        except ValueError as exc:
            raise DataError(f"{path}:{line}: {exc}") from None
        if date in seen:
            raise DataError(f"{path}:{line}: duplicate date {date}")
        seen.add(date)
        vals = [_float_cell(row, c, line, path) for c in ("r", "ru", "rd")]
        if any(not math.isfinite(v) or v < 0 for v in vals):
            raise DataError(f"{path}:{line}: ranges must be finite and non-negative")
        if (start is None or date >= start) and (end is None or date <= end):
            recs.append((date, *vals))
    recs.sort(key=lambda t: t[0])
    if not recs:
        return RangeSeries(np.empty(0), np.empty(0), np.empty(0), [])
    dates, r, ru, rd = zip(*recs)
    return RangeSeries(r, ru, rd, list(dates))


def load_series(path, columns=None, scale: float = DEFAULT_SCALE, start=None, end=None) -> RangeSeries:
    """Load either a price file (OHLC columns) or a range file (``r, ru, rd`` columns)."""
    header, _ = _read_rows(path)
    if all(c in header for c in RANGE_COLUMNS) and not columns:
        return read_ranges_csv(path, start, end)
    return extract_ranges(ingest_csv(path, columns, start, end), scale)


def apply_zero_floor(ranges: RangeSeries, spec: ModelSpec | None = None) -> tuple[RangeSeries, dict]:
    """Replace zero ranges by half the smallest positive value of the same series.

    For upward/downward models the two components are floored separately
    and the total recomputed; otherwise the total is floored and split evenly.
    """
    def floor(x):
        pos = x[x > 0]
        if pos.size == 0:
            raise ValueError("series has no positive values to derive a floor from")
        eps = 0.5 * float(pos.min())
        return np.where(x > 0, x, eps), eps, int(np.sum(x <= 0))

    info = {}
    if spec is not None and spec.two_series:
        ru, info["ru_floor"], info["ru_replaced"] = floor(ranges.ru)
        rd, info["rd_floor"], info["rd_replaced"] = floor(ranges.rd)
        return RangeSeries(ru + rd, ru, rd, ranges.dates), info
    r, info["r_floor"], info["r_replaced"] = floor(ranges.r)
    zero = ranges.r <= 0
    ru = np.where(zero, 0.5 * r, ranges.ru)
    rd = np.where(zero, r - ru, ranges.rd)
    return RangeSeries(r, ru, rd, ranges.dates), info


def zero_counts(ranges: RangeSeries, spec: ModelSpec) -> int:
    if spec.innovation is not Innovation.LOGNORMAL:
        return 0
    if spec.two_series:
        return int(np.sum(ranges.ru <= 0) + np.sum(ranges.rd <= 0))
    return int(np.sum(ranges.r[spec.start :] <= 0))


def _dates(ranges: RangeSeries) -> list[str]:
    if ranges.dates is None:
        return [str(i) for i in range(len(ranges))]
    return [_fmt_date(d) for d in ranges.dates]


def ranges_csv(ranges: RangeSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RANGE_COLUMNS)
    for d, r, ru, rd in zip(_dates(ranges), ranges.r, ranges.ru, ranges.rd):
        w.writerow([d, repr(float(r)), repr(float(ru)), repr(float(rd))])
    return buf.getvalue()


def lambda_csv(ranges: RangeSeries, path: LambdaPath, labels=("",)) -> str:
    """Fitted conditional means with the regime label in force each period."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", "r", "lambda", "regime"])
    for d, r, lam, b in zip(_dates(ranges), ranges.r, path.lam, path.branch):
        w.writerow([d, repr(float(r)), repr(float(lam)), labels[b] if b >= 0 else ""])
    return buf.getvalue()


def read_lambda_csv(path) -> tuple[list[str], np.ndarray, list[str]]:
    header, rows = _read_rows(path)
    if "lambda" not in header:
        raise DataError(f"{path}: missing column 'lambda'")
    dates = [row["date"] for _, row in rows]
    lam = np.array([_float_cell(row, "lambda", line, path) for line, row in rows])
    return dates, lam, [row.get("regime", "") for _, row in rows]


def _ljung_box_q(x: np.ndarray, h: int) -> float | None:
    try:
        return ljung_box(x, h).statistic
    except ValueError:
        return None


def summary_statistics(ranges: RangeSeries, lags=(1, 5, 22)) -> dict[str, dict]:
    """Descriptive statistics per component: moments, zero counts and Ljung-Box Q(h)."""
    out = {}
    for name in ("r", "ru", "rd"):
        x = getattr(ranges, name)
        n = x.size
        block = {"count": int(n), "zeros": int(np.sum(x == 0))}
        if n:
            block.update(
                min=float(x.min()), mean=float(x.mean()), max=float(x.max()),
                sd=float(x.std(ddof=1)) if n > 1 else 0.0,
                skewness=float(stats.skew(x)) if n > 2 and x.std() > 0 else None,
            )
        for h in lags:
            block[f"Q({h})"] = _ljung_box_q(x, h) if n > h else None
        out[name] = block
    return out


def acf_table(values, nlags: int = 22, level: float = 0.99) -> str:
    """``lag,acf,lower,upper`` rows; the band is the white-noise ``z / sqrt(n)`` interval."""
    x = np.asarray(values, dtype=float)
    rho = acf(x, min(nlags, x.size - 1))
    band = float(stats.norm.ppf(0.5 + level / 2)) / math.sqrt(x.size)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lag", "acf", "lower", "upper"])
    for k, v in enumerate(rho, start=1):
        w.writerow([k, repr(float(v)), repr(-band), repr(band)])
    return buf.getvalue()

