"""Historical-range flags, MAD outlier detection and the food-supply identity."""

from __future__ import annotations

import csv
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from datetime import date, datetime

import numpy as np

from .errors import ConfigError, SchemaError, TradeMLError

COLORS = ("Green", "Blue", "Yellow", "Orange", "Red")
# (color, trailing observations); None means the full history
FLAG_LADDER = (("Green", 3), ("Blue", 5), ("Yellow", 10), ("Orange", None))


@dataclass(frozen=True)
class SeriesPoint:
    timestamp: date
    value: float


@dataclass
class FlagResult:
    series: str
    value: float
    color: str
    windows_checked: dict = field(default_factory=dict)


@dataclass
class MadConfig:
    threshold: float = 3.0
    consistency_constant: float = 1.4826
    mode: str = "univariate"
    detrend: bool = False

    def __post_init__(self):
        if self.threshold <= 0:
            raise ConfigError("MAD threshold must be > 0")
        if self.consistency_constant <= 0:
            raise ConfigError("MAD consistency constant must be > 0")
        if self.mode not in ("univariate", "geometric"):
            raise ConfigError(f"unknown MAD mode {self.mode!r}")


@dataclass
class MadResult:
    median: float
    mad: float
    outliers: list


@dataclass
class GeometricMadResult:
    median: tuple
    gmad: float
    outliers: list


@dataclass(frozen=True)
class OutlierRow:
    description: str
    value: float
    timestamp: date


@dataclass
class SupplyLedger:
    production: float = 0.0
    imports: float = 0.0
    beginning_stocks: float = 0.0
    farm_inputs: float = 0.0
    exports: float = 0.0
    ending_stocks: float = 0.0

    def __post_init__(self):
        for name, v in vars(self).items():
            if not math.isfinite(v):
                raise TradeMLError(f"{name} must be finite")
        if self.beginning_stocks < 0 or self.ending_stocks < 0:
            raise TradeMLError("stocks must be >= 0")


def _values(history):
    return [p.value if isinstance(p, SeriesPoint) else float(p) for p in history]


WINDOW_MODES = ("observations", "calendar")


def _window(points, vals, span, mode):
    if span is None:
        return vals
    if mode == "observations":
        return vals[-span:]
    # calendar: the points dated within the last ``span`` years of the newest one
    last = points[-1].timestamp.year
    return [p.value for p in points if p.timestamp.year > last - span]


def flag_value(history, value, series="", window="observations"):
    """Color ``value`` against trailing windows of ``history`` (oldest first).

    Green if inside the [min, max] of the last 3 observations (needs at least
    2), else Blue for the last 5, Yellow for the last 10, Orange for the full
    history, Red otherwise. Bounds are inclusive. With ``window="calendar"``
    the windows are the last 3/5/10 calendar years of ``history`` (which must
    then hold :class:`SeriesPoint` items) instead of the last 3/5/10 points.
    """
    if window not in WINDOW_MODES:
        raise ConfigError(f"window must be one of {WINDOW_MODES}, got {window!r}")
    vals = _values(history)
    if not vals:
        raise TradeMLError("flagging needs a non-empty history")
    if window == "calendar" and not all(isinstance(p, SeriesPoint) for p in history):
        raise TradeMLError("calendar windows need timestamped SeriesPoint history")
    windows = {}
    color = "Red"
    for name, span in FLAG_LADDER:
        w = _window(history, vals, span, window)
        if not w:
            continue
        lo, hi = min(w), max(w)
        windows[name] = (lo, hi)
        if name == "Green" and len(w) < 2:
            continue
        if color == "Red" and lo <= value <= hi:
            color = name
    return FlagResult(series, value, color, windows)


def _median(x):
    return float(np.median(np.asarray(x, dtype=float)))


def detrend(values):
    """Residuals of an ordinary least-squares line through ``values``."""
    y = np.asarray(values, dtype=float)
    t = np.arange(len(y), dtype=float)
    slope, intercept = np.polyfit(t, y, 1)
    return y - (slope * t + intercept)


def mad_univariate(values, config=None):
    """Median, raw MAD and indices of outliers.

    A value is an outlier when ``|x - median| > threshold * constant * MAD``.
    When MAD is 0 (more than half the values tie) every value that differs
    from the median is an outlier.
    """
    config = config or MadConfig()
    x = np.asarray(values, dtype=float)
    if len(x) < 3:
        raise TradeMLError(f"MAD needs at least 3 values, got {len(x)}")
    if config.detrend:
        x = detrend(x)
    med = _median(x)
    dev = np.abs(x - med)
    mad = _median(dev)
    if mad == 0:
        flagged = np.flatnonzero(dev > 0)
    else:
        flagged = np.flatnonzero(dev > config.threshold * config.consistency_constant * mad)
    return MadResult(med, mad, flagged.tolist())


def mad_geometric(pairs, config=None):
    """Bivariate MAD: ``gmad = sqrt(MAD_x^2 + MAD_y^2)`` and Euclidean distance to the medians.

    An axis whose own MAD is 0 also flags every pair whose coordinate on that
    axis differs from the axis median.
    """
    config = config or MadConfig(mode="geometric")
    P = np.asarray(pairs, dtype=float)
    if P.ndim != 2 or P.shape[1] != 2:
        raise TradeMLError("geometric MAD expects (x, y) pairs")
    if len(P) < 3:
        raise TradeMLError(f"MAD needs at least 3 pairs, got {len(P)}")
    med = np.median(P, axis=0)
    dev = np.abs(P - med)
    mads = np.median(dev, axis=0)
    gmad = float(np.sqrt((mads ** 2).sum()))
    dist = np.sqrt((dev ** 2).sum(axis=1))
    flagged = dist > config.threshold * config.consistency_constant * gmad
    for axis in range(2):
        if mads[axis] == 0:
            flagged |= dev[:, axis] > 0
    return GeometricMadResult((float(med[0]), float(med[1])), gmad, np.flatnonzero(flagged).tolist())


def detect_series_outliers(series, config=None, description=""):
    """Outlier rows (description, value, timestamp) for one series."""
    points = list(series)
    result = mad_univariate([p.value for p in points], config)
    return [OutlierRow(description, points[i].value, points[i].timestamp) for i in result.outliers]


def food_supply(ledger):
    """Supply minus disappearance for one commodity-year."""
    supply = ledger.production + ledger.imports + ledger.beginning_stocks
    disappearance = ledger.farm_inputs + ledger.exports + ledger.ending_stocks
    return supply - disappearance


# --- series files -----------------------------------------------------------

SERIES_COLUMNS = ("series", "statistical_type", "unit", "timestamp", "value")


@dataclass
class Series:
    series: str
    statistical_type: str
    unit: str
    description: str
    points: list


def parse_date(text):
    text = text.strip()
    for fmt in ("%m/%d/%Y", "%Y-%m-%d"):
        try:
            return datetime.strptime(text, fmt).date()
        except ValueError:
            pass
    if text.isdigit() and len(text) == 4:
        return date(int(text), 1, 1)
    raise ValueError(f"unrecognised date {text!r}")


def format_date(d):
    return f"{d.month}/{d.day}/{d.year}"


def load_series_csv(path):
    """Group rows of a series CSV by ``series`` id, sorted by timestamp.

    Required columns: ``series, statistical_type, unit, timestamp, value``;
    an optional ``description`` column labels outlier rows (defaults to the
    series id). Timestamps must be strictly increasing within a series.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        if reader.fieldnames is None:
            return []
        missing = [c for c in SERIES_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        groups = OrderedDict()
        for row in reader:
            sid = row["series"]
            if sid not in groups:
                groups[sid] = Series(sid, row["statistical_type"], row["unit"],
                                     row.get("description") or sid, [])
            groups[sid].points.append(SeriesPoint(parse_date(row["timestamp"]), float(row["value"])))
    out = []
    for s in groups.values():
        s.points.sort(key=lambda p: p.timestamp)
        stamps = [p.timestamp for p in s.points]
        if any(a >= b for a, b in zip(stamps, stamps[1:])):
            raise SchemaError(f"{path}: duplicate timestamp in series {s.series!r}")
        out.append(s)
    return out


def format_number(v):
    return str(int(v)) if float(v).is_integer() else repr(float(v))
