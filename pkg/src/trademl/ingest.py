"""Parsing of trade-flow and feature CSVs into transactions and matrices."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IngestError, SchemaError

TRADE_COLUMNS = ("reporter", "partner", "year", "hs_chapter", "value")
FEATURE_KEYS = ("origin", "destination", "year", "commodity")

# Gravity covariates a feature CSV is expected to carry (any subset is accepted).
GRAVITY_FEATURES = (
    "Distance", "Population_d", "GDP_d", "GDP_o", "Population_o", "Colony_o",
    "Colony_d", "Landlocked_o", "GATT membership_d", "Landlocked_d", "Member of EU_o",
    "Hostility level_d", "WTO membership_d", "Hostility level_o", "Member of EU_d",
    "Sanction threat trade", "Island_d", "Sanction imposition trade", "Island_o",
    "Customs union agreement", "Common language", "FTA agreement", "WTO membership_o",
    "Preferential trading area goods", "GATT membership_o",
    "Environmental impact assessment", "Preferential trading area services",
    "Contiguity", "Polity_d", "Language_d", "Tariffs", "Polity_o", "Latitude_o",
    "Latitude_d", "Language_o", "Year",
)


@dataclass(frozen=True)
class TradeRecord:
    reporter: str
    partner: str
    year: int
    hs_chapter: int
    value: float


@dataclass(frozen=True)
class Transaction:
    id: str
    reporter: str
    partner: str
    year: int
    items: frozenset


@dataclass(frozen=True)
class Diagnostic:
    line: int
    message: str
    level: str = "error"

    def __str__(self):
        return f"line {self.line}: {self.message}"


@dataclass(frozen=True)
class CountryVector:
    country: str
    features: np.ndarray = field(compare=False)


@dataclass
class FeatureTable:
    """Numeric design matrix for (origin, destination, year, commodity) observations."""

    keys: list
    feature_names: list
    X: np.ndarray
    y: np.ndarray
    imputed: dict = field(default_factory=dict)
    encodings: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.keys)

    @property
    def origins(self):
        return [k[0] for k in self.keys]

    def subset(self, index):
        index = np.asarray(index, dtype=int)
        return FeatureTable(
            keys=[self.keys[i] for i in index],
            feature_names=list(self.feature_names),
            X=self.X[index],
            y=self.y[index],
            imputed=dict(self.imputed),
            encodings=dict(self.encodings),
        )


def load_trade_csv(path, schema=None, hs_range=(1, 96)):
    """Read a trade CSV.

    ``schema`` maps the canonical column names (``reporter``, ``partner``,
    ``year``, ``hs_chapter``, ``value``) to the headers used in the file.
    Returns ``(records, diagnostics)``; rows that fail validation are left out
    of ``records`` and described in ``diagnostics`` with their line number.
    """
    schema = {c: c for c in TRADE_COLUMNS} | dict(schema or {})
    lo, hi = hs_range
    records, diagnostics = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(_skip_comments(fh))
        try:
            header = next(reader)
        except StopIteration:
            return records, diagnostics
        header = [h.strip() for h in header]
        missing = [schema[c] for c in TRADE_COLUMNS if schema[c] not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        pos = {c: header.index(schema[c]) for c in TRADE_COLUMNS}
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                records.append(_parse_trade_row(row, pos, lo, hi, line))
            except IngestError as exc:
                diagnostics.append(Diagnostic(line, str(exc).split(": ", 1)[-1]))
    return records, diagnostics


def _skip_comments(lines):
    for line in lines:
        if not line.startswith("#"):
            yield line


def _parse_trade_row(row, pos, lo, hi, line):
    if len(row) < len(pos) or len(row) <= max(pos.values()):
        raise IngestError(f"expected {len(pos)} fields, got {len(row)}", line)
    reporter = row[pos["reporter"]].strip()
    partner = row[pos["partner"]].strip()
    if not reporter or not partner:
        raise IngestError("empty country code", line)
    if reporter == partner:
        raise IngestError(f"reporter equals partner ({reporter})", line)
    try:
        year = int(row[pos["year"]])
        chapter = _int_code(row[pos["hs_chapter"]])
        value = float(row[pos["value"]])
    except ValueError as exc:
        raise IngestError(f"unparseable field: {exc}", line) from None
    if not lo <= chapter <= hi:
        raise IngestError(f"HS chapter {chapter} outside {lo}..{hi}", line)
    if not math.isfinite(value) or value < 0:
        raise IngestError(f"trade value must be finite and >= 0, got {value}", line)
    return TradeRecord(reporter, partner, year, chapter, value)


def _int_code(text):
    number = float(text)
    if not number.is_integer():
        raise ValueError(f"HS code {text!r} is not an integer")
    return int(number)


def aggregate_values(records):
    """Sum of trade value per (reporter, partner, year, chapter)."""
    totals = defaultdict(float)
    for r in records:
        totals[(r.reporter, r.partner, r.year, r.hs_chapter)] += r.value
    return dict(totals)


def build_transactions(records, min_value=0.0):
    """One boolean basket per (reporter, partner, year).

    A chapter is in the basket when its summed value is strictly greater than
    ``min_value``. Empty baskets are dropped. Output is sorted by key.
    """
    if min_value < 0:
        raise ValueError("min_value must be >= 0")
    baskets = defaultdict(set)
    for (reporter, partner, year, chapter), total in aggregate_values(records).items():
        key = (reporter, partner, year)
        baskets.setdefault(key, set())
        if total > min_value:
            baskets[key].add(chapter)
    out = []
    for key in sorted(baskets):
        items = baskets[key]
        if items:
            reporter, partner, year = key
            out.append(Transaction(f"{reporter}|{partner}|{year}", reporter, partner, year, frozenset(items)))
    return out


def flatten_transactions(transactions, value=1.0):
    """Inverse of :func:`build_transactions`: one record per basket item."""
    return [
        TradeRecord(t.reporter, t.partner, t.year, c, value)
        for t in transactions
        for c in sorted(t.items)
    ]


def country_totals(records):
    """Total traded value per country, counting both reporter and partner roles."""
    totals = defaultdict(float)
    for r in records:
        totals[r.reporter] += r.value
        totals[r.partner] += r.value
    return dict(totals)


def build_country_vectors(records, mode="totals", matrix=None):
    """Standardized country feature vectors for clustering.

    ``mode="totals"`` uses per-year total trade (as reporter plus as partner),
    one dimension per year. ``mode="custom"`` takes ``matrix``, a mapping
    country -> sequence of floats. Each dimension is z-scored with the
    population standard deviation; zero-variance dimensions become zeros.
    """
    if mode == "totals":
        years = sorted({r.year for r in records})
        col = {y: j for j, y in enumerate(years)}
        raw = defaultdict(lambda: np.zeros(len(years)))
        for r in records:
            raw[r.reporter][col[r.year]] += r.value
            raw[r.partner][col[r.year]] += r.value
    elif mode == "custom":
        if matrix is None:
            raise ValueError("custom mode needs a country -> vector matrix")
        raw = {c: np.asarray(v, dtype=float) for c, v in matrix.items()}
    else:
        raise ValueError(f"unknown country-vector mode {mode!r}")
    countries = sorted(raw)
    if len(countries) < 2:
        raise ValueError("at least two countries are needed to build cluster vectors")
    M = np.vstack([raw[c] for c in countries])
    Z = standardize(M)
    return [CountryVector(c, Z[i]) for i, c in enumerate(countries)]


def standardize(M):
    M = np.asarray(M, dtype=float)
    mean = M.mean(axis=0)
    std = M.std(axis=0)
    centered = M - mean
    Z = np.zeros_like(M)
    ok = std > 1e-12 * np.maximum(1.0, np.abs(mean))
    Z[:, ok] = centered[:, ok] / std[ok]
    return Z


def load_feature_csv(path, feature_names=None, require_target=True):
    """Read a feature CSV into a :class:`FeatureTable`.

    Non-numeric columns are ordinal-encoded by sorted distinct value. Missing
    cells (empty, ``NA``, ``nan``) are imputed with the column median and the
    number of imputed cells is recorded per column. When ``feature_names`` is
    given (e.g. from a trained model) exactly those columns are read, in that
    order, and a missing one raises :class:`SchemaError`. With
    ``require_target=False`` the ``target`` column may be absent, in which
    case ``y`` is all NaN.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(_skip_comments(fh)))
    if not rows:
        raise SchemaError(f"{path}: empty feature file")
    header = [h.strip() for h in rows[0]]
    required = (*FEATURE_KEYS, "target") if require_target else FEATURE_KEYS
    for col in required:
        if col not in header:
            raise SchemaError(f"{path}: missing column {col!r}")
    if feature_names is None:
        feature_names = [h for h in header if h not in FEATURE_KEYS and h != "target"]
    else:
        absent = [f for f in feature_names if f not in header]
        if absent:
            raise SchemaError(f"{path}: missing feature column(s) {', '.join(map(repr, absent))}")
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    idx = {h: i for i, h in enumerate(header)}
    keys = []
    for n, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise IngestError(f"expected {len(header)} fields, got {len(r)}", n)
        keys.append((r[idx["origin"]], r[idx["destination"]], int(r[idx["year"]]), r[idx["commodity"]]))
    columns, encodings = [], {}
    for name in feature_names:
        col, enc = _numeric_column([r[idx[name]] for r in body])
        columns.append(col)
        if enc:
            encodings[name] = enc
    X = np.column_stack(columns) if columns else np.zeros((len(body), 0))
    if "target" in idx:
        y = np.array([float(r[idx["target"]]) for r in body])
    else:
        y = np.full(len(body), np.nan)
    if "target" in idx and (np.any(~np.isfinite(y)) or np.any(y < 0)):
        raise IngestError("target values must be finite and >= 0")
    X, imputed = impute_median(X, feature_names)
    return FeatureTable(keys, list(feature_names), X, y, imputed, encodings)


_MISSING = {"", "na", "nan", "null", "none"}


def _numeric_column(cells):
    vals, text = [], False
    for c in cells:
        c = c.strip()
        if c.lower() in _MISSING:
            vals.append(None)
            continue
        try:
            vals.append(float(c))
        except ValueError:
            text = True
            vals.append(c)
    if not text:
        return np.array([np.nan if v is None else v for v in vals]), None
    levels = sorted({str(v) for v in vals if v is not None})
    enc = {lvl: i for i, lvl in enumerate(levels)}
    return np.array([np.nan if v is None else enc[str(v)] for v in vals], dtype=float), enc


def impute_median(X, names):
    X = np.array(X, dtype=float)
    counts = {}
    for j, name in enumerate(names):
        miss = np.isnan(X[:, j])
        counts[name] = int(miss.sum())
        if miss.any():
            fill = np.median(X[~miss, j]) if (~miss).any() else 0.0
            X[miss, j] = fill
    return X, counts


def write_trade_csv(path, records):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRADE_COLUMNS)
        for r in records:
            w.writerow([r.reporter, r.partner, r.year, r.hs_chapter, _fmt_value(r.value)])


def write_feature_csv(path, keys, feature_names, X, y):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*FEATURE_KEYS, *feature_names, "target"])
        for key, row, target in zip(keys, X, y):
            w.writerow([*key, *(repr(float(v)) for v in row), repr(float(target))])


def _fmt_value(v):
    return str(int(v)) if float(v).is_integer() else repr(float(v))
