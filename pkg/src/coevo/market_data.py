"""OHLCV ingestion, day-ahead labels, feature datasets and timeline segmentation."""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CoverageError,
    DataValueError,
    FormatError,
    InsufficientDataError,
    OrderingError,
    SpecificationError,
)
from .indicators import DEFAULT_REGISTRY, Indicator, registry_feature_names, registry_lookback

OHLCV_COLUMNS = ("date", "open", "high", "low", "close", "volume")
PARTITIONS = ("pre_crisis", "crisis_train", "crisis_test", "hold_out")


def _to_day(value) -> np.datetime64:
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[D]")
    return np.datetime64(str(value), "D")


@dataclass(frozen=True)
class OhlcvBar:
    date: dt.date
    open: float
    high: float
    low: float
    close: float
    volume: float

    def __post_init__(self):
        prices = (self.open, self.high, self.low, self.close)
        if not all(np.isfinite(p) and p > 0 for p in prices):
            raise DataValueError(f"{self.date}: prices must be positive")
        if not (np.isfinite(self.volume) and self.volume >= 0):
            raise DataValueError(f"{self.date}: volume must be non-negative")
        if self.low > min(self.open, self.close) or self.high < max(self.open, self.close):
            raise DataValueError(f"{self.date}: low/high do not bracket open/close")


class OhlcvSeries:
    """Column-oriented daily bars with strictly increasing dates."""

    def __init__(self, dates, open, high, low, close, volume):
        self.dates = np.asarray(dates, dtype="datetime64[D]")
        self.open = np.asarray(open, dtype=float)
        self.high = np.asarray(high, dtype=float)
        self.low = np.asarray(low, dtype=float)
        self.close = np.asarray(close, dtype=float)
        self.volume = np.asarray(volume, dtype=float)
        n = len(self.dates)
        if n < 1:
            raise InsufficientDataError("series needs at least one bar")
        if any(len(a) != n for a in (self.open, self.high, self.low, self.close, self.volume)):
            raise FormatError("column lengths differ")
        if n > 1 and not np.all(np.diff(self.dates) > np.timedelta64(0, "D")):
            raise OrderingError("dates must be strictly increasing")
        prices = np.stack([self.open, self.high, self.low, self.close])
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
            raise DataValueError("prices must be positive and finite")
        if not np.all(np.isfinite(self.volume)) or np.any(self.volume < 0):
            raise DataValueError("volume must be non-negative")
        if np.any(self.low > np.minimum(self.open, self.close)) or np.any(
            self.high < np.maximum(self.open, self.close)
        ):
            raise DataValueError("low/high do not bracket open/close")

    @classmethod
    def from_bars(cls, bars: Sequence[OhlcvBar]) -> "OhlcvSeries":
        return cls(
            [np.datetime64(b.date, "D") for b in bars],
            [b.open for b in bars],
            [b.high for b in bars],
            [b.low for b in bars],
            [b.close for b in bars],
            [b.volume for b in bars],
        )

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def bars(self) -> list[OhlcvBar]:
        return [
            OhlcvBar(d.astype(dt.date), o, h, l, c, v)
            for d, o, h, l, c, v in zip(
                self.dates, self.open, self.high, self.low, self.close, self.volume
            )
        ]

    def slice(self, start: int, stop: int | None = None) -> "OhlcvSeries":
        s = np.s_[start:stop]
        return OhlcvSeries(
            self.dates[s], self.open[s], self.high[s], self.low[s], self.close[s], self.volume[s]
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(OHLCV_COLUMNS)
            for row in zip(
                self.dates.astype(str), self.open.tolist(), self.high.tolist(),
                self.low.tolist(), self.close.tolist(), self.volume.tolist(),
            ):
                w.writerow(row)


def load_ohlcv(path) -> OhlcvSeries:
    """Read a ``date,open,high,low,close,volume`` CSV; rows are sorted by date.

    Errors carry the offending line number.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if sorted(header) != sorted(OHLCV_COLUMNS) or len(header) != len(OHLCV_COLUMNS):
            missing = sorted(set(OHLCV_COLUMNS) - set(header))
            extra = sorted(set(header) - set(OHLCV_COLUMNS))
            raise FormatError(f"{path}:1: bad header (missing {missing}, extra {extra})")
        idx = {name: header.index(name) for name in OHLCV_COLUMNS}
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not x.strip() for x in rec):
                continue
            if len(rec) != len(OHLCV_COLUMNS):
                raise FormatError(f"{path}:{lineno}: expected 6 fields, got {len(rec)}")
            try:
                day = np.datetime64(rec[idx["date"]].strip(), "D")
                vals = [float(rec[idx[k]]) for k in OHLCV_COLUMNS[1:]]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            o, h, l, c, v = vals
            if min(o, h, l, c) <= 0:
                raise DataValueError(f"{path}:{lineno}: non-positive price")
            if v < 0:
                raise DataValueError(f"{path}:{lineno}: negative volume")
            rows.append((day, o, h, l, c, v, lineno))
    if not rows:
        raise InsufficientDataError(f"{path}: no data rows")
    rows.sort(key=lambda r: r[0])
    for a, b in zip(rows, rows[1:]):
        if b[0] <= a[0]:
            raise OrderingError(f"{path}:{b[6]}: duplicate date {b[0]}")
    cols = list(zip(*rows))
    try:
        return OhlcvSeries(*cols[:6])
    except DataValueError as exc:
        raise DataValueError(f"{path}: {exc}") from None


def generate_labels(series: OhlcvSeries) -> list[tuple[dt.date, int]]:
    """Day-ahead movement labels: day ``t`` gets 1 iff close(t+1) > close(t)."""
    if len(series) < 2:
        raise InsufficientDataError("labels need at least two bars")
    up = (np.diff(series.close) > 0).astype(int)
    return [(d.astype(dt.date), int(y)) for d, y in zip(series.dates[:-1], up)]


@dataclass
class FeatureDataset:
    feature_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    dates: np.ndarray

    def __post_init__(self):
        self.feature_names = tuple(self.feature_names)
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=np.int8)
        self.dates = np.asarray(self.dates, dtype="datetime64[D]")
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise FormatError(f"feature matrix shape {self.X.shape} vs {len(self.feature_names)} names")
        if not (len(self.X) == len(self.y) == len(self.dates)):
            raise FormatError("rows, labels and dates differ in length")
        if not np.all(np.isfinite(self.X)):
            raise DataValueError("feature matrix contains non-finite values")
        if np.any((self.y != 0) & (self.y != 1)):
            raise DataValueError("labels must be 0 or 1")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def rows(self) -> Iterable[tuple[np.ndarray, int, np.datetime64]]:
        return zip(self.X, self.y.tolist(), self.dates)

    def take(self, index) -> "FeatureDataset":
        return FeatureDataset(self.feature_names, self.X[index], self.y[index], self.dates[index])

    def with_features(self, X: np.ndarray) -> "FeatureDataset":
        return FeatureDataset(self.feature_names, X, self.y, self.dates)

    @staticmethod
    def concat(parts: Sequence["FeatureDataset"]) -> "FeatureDataset":
        names = parts[0].feature_names
        if any(p.feature_names != names for p in parts):
            raise FormatError("cannot concatenate datasets with different features")
        return FeatureDataset(
            names,
            np.concatenate([p.X for p in parts]),
            np.concatenate([p.y for p in parts]),
            np.concatenate([p.dates for p in parts]),
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*self.feature_names, "label", "date"])
            for x, y, d in zip(self.X.tolist(), self.y.tolist(), self.dates.astype(str)):
                w.writerow([*x, y, d])

    @classmethod
    def from_csv(cls, path) -> "FeatureDataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[-2:] != ["label", "date"]:
                raise FormatError(f"{path}:1: last columns must be label,date")
            X, y, dates = [], [], []
            for lineno, rec in enumerate(reader, start=2):
                if len(rec) != len(header):
                    raise FormatError(f"{path}:{lineno}: expected {len(header)} fields")
                try:
                    X.append([float(v) for v in rec[:-2]])
                    y.append(int(rec[-2]))
                    dates.append(np.datetime64(rec[-1], "D"))
                except ValueError as exc:
                    raise FormatError(f"{path}:{lineno}: {exc}") from None
        n_f = len(header) - 2
        return cls(tuple(header[:-2]), np.array(X, dtype=float).reshape(-1, n_f), y, dates)


def compute_features(series: OhlcvSeries, registry: Sequence[Indicator] = DEFAULT_REGISTRY) -> FeatureDataset:
    """Evaluate every registry feature and attach day-ahead labels.

    Rows start once the longest lookback is covered and stop one bar before
    the end (the last bar has no next-day close).
    """
    lookback = registry_lookback(registry)
    n = len(series)
    if n < lookback + 2:
        raise InsufficientDataError(f"need at least {lookback + 2} bars, got {n}")
    args = (series.open, series.high, series.low, series.close, series.volume)
    cols = [ind.func(*args, tau) for ind in registry for tau in ind.windows]
    X = np.column_stack(cols)[lookback:n - 1]
    y = (np.diff(series.close) > 0).astype(np.int8)[lookback:]
    if not np.all(np.isfinite(X)):
        bad = np.argwhere(~np.isfinite(X))[0]
        raise DataValueError(
            f"non-finite feature {registry_feature_names(registry)[bad[1]]} "
            f"on {series.dates[lookback + bad[0]]}"
        )
    return FeatureDataset(registry_feature_names(registry), X, y, series.dates[lookback:n - 1])


def _month_start(ym: str) -> np.datetime64:
    return np.datetime64(ym, "M").astype("datetime64[D]")


def _next_month_start(ym: str) -> np.datetime64:
    return (np.datetime64(ym, "M") + 1).astype("datetime64[D]")


@dataclass(frozen=True)
class TimelineSpec:
    """Four half-open date ranges ``[start, end)`` keyed by partition name."""

    timeline_id: str
    ranges: Mapping[str, tuple[np.datetime64, np.datetime64]]

    def __post_init__(self):
        if set(self.ranges) != set(PARTITIONS):
            raise SpecificationError(f"timeline needs exactly the partitions {PARTITIONS}")
        fixed = {k: (_to_day(a), _to_day(b)) for k, (a, b) in self.ranges.items()}
        for name, (a, b) in fixed.items():
            if not a < b:
                raise SpecificationError(f"{name}: empty or reversed range {a}..{b}")
        object.__setattr__(self, "ranges", {k: fixed[k] for k in PARTITIONS})
        names = list(PARTITIONS)
        for i, p in enumerate(names):
            for q in names[i + 1:]:
                (a0, a1), (b0, b1) = fixed[p], fixed[q]
                if a0 < b1 and b0 < a1:
                    raise SpecificationError(f"ranges {p} and {q} overlap")
        hold_start = fixed["hold_out"][0]
        if any(fixed[p][1] > hold_start for p in PARTITIONS[:3]):
            raise SpecificationError("hold_out must be the latest range")

    @classmethod
    def from_months(cls, timeline_id: str, months: Mapping[str, tuple[str, str]],
                    boundaries: Mapping[str, str] | None = None) -> "TimelineSpec":
        """Build from inclusive ``(YYYY-MM, YYYY-MM)`` month ranges.

        When a range starts in the month the previous one ends, the cut falls
        on ``boundaries[later_partition]`` (default: first day of that month,
        so the shared month belongs to the later partition).
        """
        boundaries = dict(boundaries or {})
        ranges = {}
        order = [p for p in PARTITIONS]
        for i, name in enumerate(order):
            first, last = months[name]
            start = _month_start(first)
            end = _next_month_start(last)
            if i > 0 and months[order[i - 1]][1] == first:
                start = _to_day(boundaries.get(name, start))
            if i + 1 < len(order) and months[order[i + 1]][0] == last:
                end = _to_day(boundaries.get(order[i + 1], _month_start(last)))
            ranges[name] = (start, end)
        return cls(timeline_id, ranges)

    def to_dict(self) -> dict:
        return {
            "timeline_id": self.timeline_id,
            "ranges": {k: [str(a), str(b)] for k, (a, b) in self.ranges.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TimelineSpec":
        return cls(d["timeline_id"], {k: tuple(v) for k, v in d["ranges"].items()})


TIMELINES: dict[str, TimelineSpec] = {
    "timeline-1": TimelineSpec.from_months(
        "timeline-1",
        {
            "pre_crisis": ("2005-03", "2006-12"),
            "crisis_train": ("2007-01", "2009-07"),
            "crisis_test": ("2009-07", "2010-04"),
            "hold_out": ("2010-05", "2011-05"),
        },
    ),
    "timeline-2": TimelineSpec.from_months(
        "timeline-2",
        {
            "pre_crisis": ("2017-01", "2018-12"),
            "crisis_train": ("2019-01", "2020-08"),
            "crisis_test": ("2020-08", "2021-01"),
            "hold_out": ("2021-01", "2021-05"),
        },
    ),
}


class DatasetSplit:
    """The four timeline partitions.

    Reads of the hold-out partition are counted so that callers can prove it
    was never touched during search.
    """

    def __init__(self, pre_crisis: FeatureDataset, crisis_train: FeatureDataset,
                 crisis_test: FeatureDataset, hold_out: FeatureDataset, timeline_id: str = ""):
        self.pre_crisis = pre_crisis
        self.crisis_train = crisis_train
        self.crisis_test = crisis_test
        self._hold_out = hold_out
        self.timeline_id = timeline_id
        self.hold_out_reads = 0

    @property
    def hold_out(self) -> FeatureDataset:
        self.hold_out_reads += 1
        return self._hold_out

    def sizes(self) -> dict[str, int]:
        return {
            "pre_crisis": len(self.pre_crisis),
            "crisis_train": len(self.crisis_train),
            "crisis_test": len(self.crisis_test),
            "hold_out": len(self._hold_out),
        }


def segment_timeline(dataset: FeatureDataset, spec: TimelineSpec) -> DatasetSplit:
    parts = {}
    for name, (a, b) in spec.ranges.items():
        mask = (dataset.dates >= a) & (dataset.dates < b)
        parts[name] = dataset.take(mask)
    empty = [k for k in PARTITIONS if len(parts[k]) == 0]
    if empty:
        raise CoverageError(f"{spec.timeline_id}: no rows in partition(s) {', '.join(empty)}")
    return DatasetSplit(*(parts[k] for k in PARTITIONS), timeline_id=spec.timeline_id)


@dataclass
class StandardizationParams:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def flagged(self) -> bool:
        return bool(np.any(self.constant))


def fit_standardization(train: FeatureDataset) -> StandardizationParams:
    if len(train) == 0:
        raise InsufficientDataError("cannot standardize an empty dataset")
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)
    scale = np.abs(mean) + 1.0
    constant = std <= 1e-12 * scale
    std = np.where(constant, 1.0, std)
    return StandardizationParams(mean, std, constant)


def apply_standardization(params: StandardizationParams, ds: FeatureDataset) -> FeatureDataset:
    return ds.with_features((ds.X - params.mean) / params.std)


@dataclass(frozen=True)
class RegimeParams:
    """Daily log-return dynamics: mean, volatility and lag-1 autocorrelation."""

    drift: float = 0.0
    volatility: float = 0.01
    autocorr: float = 0.0
    volume: float = 1.0e6


def synth_regime_series(pre: RegimeParams, post: RegimeParams, lengths: tuple[int, int],
                        seed: int, start: str = "2000-01-03") -> OhlcvSeries:
    """Random-walk OHLCV whose return dynamics switch after ``lengths[0]`` bars."""
    n_pre, n_post = (int(n) for n in lengths)
    lookback = registry_lookback()
    if min(n_pre, n_post) < lookback + 2:
        raise InsufficientDataError(f"each regime needs at least {lookback + 2} bars")
    n = n_pre + n_post
    rng = np.random.default_rng(seed)
    shocks = rng.standard_normal(n)
    regime = [pre] * n_pre + [post] * n_post
    excess = np.empty(n)
    prev = 0.0
    for t, p in enumerate(regime):
        prev = p.autocorr * prev + p.volatility * np.sqrt(1.0 - p.autocorr ** 2) * shocks[t]
        excess[t] = prev
    drift = np.array([p.drift for p in regime])
    vol = np.array([p.volatility for p in regime])
    base_vol = np.array([p.volume for p in regime])
    r = drift + excess
    r[0] = 0.0
    close = 100.0 * np.exp(np.cumsum(r))
    prev_close = np.concatenate([[close[0]], close[:-1]])
    open_ = prev_close * np.exp(0.2 * vol * rng.standard_normal(n))
    top = np.maximum(open_, close)
    bottom = np.minimum(open_, close)
    high = top * np.exp(0.5 * vol * np.abs(rng.standard_normal(n)))
    low = bottom * np.exp(-0.5 * vol * np.abs(rng.standard_normal(n)))
    volume = np.round(base_vol * np.exp(0.25 * rng.standard_normal(n)) * (1.0 + 20.0 * np.abs(r)))
    dates = np.busday_offset(np.datetime64(start, "D"), np.arange(n), roll="forward")
    return OhlcvSeries(dates, open_, high, low, close, volume)


def synthetic_timeline(series: OhlcvSeries, n_pre: int,
                       fractions: tuple[float, float, float] = (0.5, 0.25, 0.25),
                       timeline_id: str = "synthetic") -> TimelineSpec:
    """Pre-crisis = the first regime; the second regime is cut into train/test/hold-out."""
    dates = series.dates
    n_post = len(dates) - n_pre
    c1 = n_pre + int(round(fractions[0] * n_post))
    c2 = c1 + int(round(fractions[1] * n_post))
    end = dates[-1] + np.timedelta64(1, "D")
    return TimelineSpec(
        timeline_id,
        {
            "pre_crisis": (dates[0], dates[n_pre]),
            "crisis_train": (dates[n_pre], dates[c1]),
            "crisis_test": (dates[c1], dates[c2]),
            "hold_out": (dates[c2], end),
        },
    )
