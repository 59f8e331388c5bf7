"""Feature-engineering primitives: lags, rolling means, scaling, framing.

Lag and rolling windows never bridge a gap in the hour grid: tables are
built per contiguous span and rows with incomplete windows are trimmed.
The regression target is always kept in raw patient-count units; scaling
applies to feature columns only, with parameters fitted on training rows.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from .timeutil import MINUTES_PER_HOUR, format_minute, parse_minute

# 10-way raw weather categories grouped down to 5.
WEATHER_FIVE = ("Clear", "Clouds", "Rain", "Thunderstorm", "Others")
_RECATEGORIZE = {
    "Clear": "Clear",
    "Clouds": "Clouds",
    "Mist": "Clouds",
    "Rain": "Rain",
    "Drizzle": "Rain",
    "Thunderstorm": "Thunderstorm",
    "Snow": "Others",
    "Haze": "Others",
    "Fog": "Others",
    "Smoke": "Others",
}


def recategorize_weather(condition10: str) -> str:
    try:
        return _RECATEGORIZE[condition10]
    except KeyError:
        raise ValueError(f"unknown weather condition {condition10!r}") from None


@dataclass(frozen=True)
class FeatureTable:
    """Rectangular numeric table with per-row timestamps.

    ``scale_exempt`` names binary/one-hot columns that bypass scaling.
    """

    columns: tuple[str, ...]
    values: np.ndarray  # shape (n_rows, n_columns), float64
    timestamps: np.ndarray  # shape (n_rows,), minutes since epoch
    scale_exempt: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise ValueError("table values do not match the column list")
        if len(self.timestamps) != len(self.values):
            raise ValueError("one timestamp per row is required")
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("column names must be unique")

    @property
    def n_rows(self) -> int:
        return len(self.values)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def take_rows(self, idx: Sequence[int] | np.ndarray) -> "FeatureTable":
        idx = np.asarray(idx)
        return FeatureTable(self.columns, self.values[idx], self.timestamps[idx], self.scale_exempt)


def lag_features(series: Sequence[float] | np.ndarray, k: int) -> tuple[tuple[str, ...], np.ndarray]:
    """Strict lag columns lag_1..lag_k; the first k rows are NaN-incomplete."""
    values = np.asarray(series, dtype=np.float64)
    if k < 1:
        raise ValueError("lag window must be at least 1")
    if k >= len(values):
        raise ValueError("lag window must be shorter than the series")
    n = len(values)
    out = np.full((n, k), np.nan)
    for j in range(1, k + 1):
        out[j:, j - 1] = values[: n - j]
    return tuple(f"lag_{j}" for j in range(1, k + 1)), out


def rolling_mean(series: Sequence[float] | np.ndarray, w: int) -> np.ndarray:
    """Trailing mean of the current and previous w-1 values; NaN while short."""
    values = np.asarray(series, dtype=np.float64)
    if w < 1:
        raise ValueError("rolling window must be at least 1")
    if w > len(values):
        raise ValueError("rolling window exceeds the series length")
    out = np.full(len(values), np.nan)
    csum = np.cumsum(values)
    out[w - 1 :] = (csum[w - 1 :] - np.concatenate(([0.0], csum[: len(values) - w]))) / w
    return out


def lagged_block(
    name: str, series: Sequence[float] | np.ndarray, window: int
) -> tuple[tuple[str, ...], np.ndarray]:
    """The current value plus window-1 strict lags.

    This is the feature layout of the direct-forecast design matrix: a
    window of w observations covers offsets 0..w-1 back from the anchor
    hour, so a table built with window w loses its first w-1 rows.
    """
    values = np.asarray(series, dtype=np.float64)
    if window < 1:
        raise ValueError("window must be at least 1")
    if window > len(values):
        raise ValueError("window exceeds the series length")
    if window == 1:
        return (name,), values.reshape(-1, 1)
    lag_names, lags = lag_features(values, window - 1)
    names = (name,) + tuple(f"{name}_{ln}" for ln in lag_names)
    return names, np.column_stack([values, lags])


@dataclass(frozen=True)
class ScalerParams:
    """Fitted per-column statistics, reusable at inference time."""

    method: str  # "zscore" | "minmax"
    columns: tuple[str, ...]
    center: tuple[float, ...]  # mean (zscore) or min (minmax)
    spread: tuple[float, ...]  # sd (zscore) or max-min (minmax); 0 marks a constant column
    exempt: tuple[str, ...]
    fit_span: tuple[int, int]  # first/last fitted row timestamps

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "columns": list(self.columns),
            "center": list(self.center),
            "spread": list(self.spread),
            "exempt": list(self.exempt),
            "fit_span": [format_minute(self.fit_span[0]), format_minute(self.fit_span[1])],
        }

    @staticmethod
    def from_dict(data: dict) -> "ScalerParams":
        return ScalerParams(
            method=data["method"],
            columns=tuple(data["columns"]),
            center=tuple(float(x) for x in data["center"]),
            spread=tuple(float(x) for x in data["spread"]),
            exempt=tuple(data["exempt"]),
            fit_span=(parse_minute(data["fit_span"][0]), parse_minute(data["fit_span"][1])),
        )


def fit_scaler(table: FeatureTable, method: str, fit_rows: np.ndarray | Sequence[int]) -> ScalerParams:
    """Fit column statistics on the given training rows only."""
    if method not in ("zscore", "minmax"):
        raise ValueError(f"unknown scaling method {method!r}")
    idx = np.asarray(fit_rows)
    if len(idx) == 0:
        raise ValueError("cannot fit a scaler on an empty row range")
    data = table.values[idx]
    center, spread = [], []
    for pos, name in enumerate(table.columns):
        col = data[:, pos]
        if name in table.scale_exempt:
            center.append(0.0)
            spread.append(1.0)
        elif method == "zscore":
            center.append(float(np.mean(col)))
            spread.append(float(np.std(col)))
        else:
            lo, hi = float(np.min(col)), float(np.max(col))
            center.append(lo)
            spread.append(hi - lo)
    ts = table.timestamps[idx]
    return ScalerParams(
        method=method,
        columns=table.columns,
        center=tuple(center),
        spread=tuple(spread),
        exempt=tuple(sorted(table.scale_exempt)),
        fit_span=(int(ts.min()), int(ts.max())),
    )


def apply_scaler(params: ScalerParams, table: FeatureTable) -> FeatureTable:
    """Transform columns with previously fitted statistics.

    Constant (zero-spread) columns map to all zeros; exempt columns pass
    through untouched.
    """
    if table.columns != params.columns:
        raise ValueError("table columns do not match the fitted scaler")
    out = table.values.copy()
    for pos, name in enumerate(params.columns):
        if name in params.exempt:
            continue
        spread = params.spread[pos]
        if spread == 0.0:
            out[:, pos] = 0.0
        else:
            out[:, pos] = (out[:, pos] - params.center[pos]) / spread
    return FeatureTable(table.columns, out, table.timestamps, table.scale_exempt)


@dataclass(frozen=True)
class SupervisedFrame:
    """Anchor rows paired with the raw target value h steps later."""

    X: FeatureTable
    y: np.ndarray
    anchor_ts: np.ndarray
    target_ts: np.ndarray
    horizon: int
    step_minutes: int
    target: str

    @property
    def n_rows(self) -> int:
        return len(self.y)

    def take(self, idx: np.ndarray | Sequence[int]) -> "SupervisedFrame":
        idx = np.asarray(idx)
        return SupervisedFrame(
            self.X.take_rows(idx),
            self.y[idx],
            self.anchor_ts[idx],
            self.target_ts[idx],
            self.horizon,
            self.step_minutes,
            self.target,
        )


def contiguous_spans(timestamps: np.ndarray, step_minutes: int) -> np.ndarray:
    """Span label per row; the label increments at every gap in the grid."""
    ts = np.asarray(timestamps)
    if len(ts) == 0:
        return np.zeros(0, dtype=np.int64)
    breaks = np.diff(ts) != step_minutes
    return np.concatenate(([0], np.cumsum(breaks))).astype(np.int64)


def make_supervised(
    table: FeatureTable, target: str, h: int, step_minutes: int = MINUTES_PER_HOUR
) -> SupervisedFrame:
    """Pair each anchor row with the target value exactly h steps ahead.

    Pairs whose target falls past a gap (an excluded stretch of hours) are
    not emitted: anchor and target must lie in the same contiguous span.
    On a gap-free table built from M source rows with lag window k this
    yields M - k - h + 1 rows.
    """
    if h < 1:
        raise ValueError("horizon must be at least 1")
    if target not in table.columns:
        raise ValueError(f"target column {target!r} is missing from the table")
    ts = table.timestamps
    spans = contiguous_spans(ts, step_minutes)
    row_at = {int(t): i for i, t in enumerate(ts)}
    target_values = table.column(target)

    anchors, ys, tts = [], [], []
    for i, t in enumerate(ts):
        j = row_at.get(int(t) + h * step_minutes)
        if j is not None and spans[j] == spans[i]:
            anchors.append(i)
            ys.append(target_values[j])
            tts.append(int(ts[j]))
    anchors = np.asarray(anchors, dtype=np.int64)
    return SupervisedFrame(
        X=table.take_rows(anchors),
        y=np.asarray(ys, dtype=np.float64),
        anchor_ts=ts[anchors],
        target_ts=np.asarray(tts, dtype=np.int64),
        horizon=h,
        step_minutes=step_minutes,
        target=target,
    )


def write_feature_table(out: TextIO, table: FeatureTable) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(("timestamp",) + table.columns)
    writer.writerow(("#scale_exempt",) + tuple(sorted(table.scale_exempt)))
    for t, row in zip(table.timestamps, table.values):
        writer.writerow([format_minute(int(t))] + [repr(float(v)) for v in row])


def read_feature_table(source: TextIO | str) -> FeatureTable:
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    header = next(reader, None)
    if not header or header[0] != "timestamp":
        raise ValueError("feature table must start with a timestamp column")
    columns = tuple(header[1:])
    exempt_row = next(reader, None)
    if not exempt_row or exempt_row[0] != "#scale_exempt":
        raise ValueError("feature table is missing the scale-exempt row")
    exempt = frozenset(c for c in exempt_row[1:] if c)
    timestamps, rows = [], []
    for row in reader:
        if not row:
            continue
        timestamps.append(parse_minute(row[0]))
        rows.append([float(c) for c in row[1:]])
    return FeatureTable(
        columns,
        np.asarray(rows, dtype=np.float64).reshape(len(rows), len(columns)),
        np.asarray(timestamps, dtype=np.int64),
        exempt,
    )
