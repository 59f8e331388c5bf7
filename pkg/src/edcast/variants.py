"""The DS0-DS15 feature-set catalog and hourly/daily table assembly.

The catalog lives in variants.json so a different reading of the recipe
matrix is a one-file change. Every variant shares the same backbone
(waiting-count window, extreme-case flag, calendar integers) and differs
only in the optional blocks and the scaling method.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from typing import Sequence

import numpy as np

from .featurebuild import (
    WEATHER_FIVE,
    FeatureTable,
    contiguous_spans,
    lagged_block,
    rolling_mean,
)
from .flowmetrics import HourlyRecord
from .ingestion import WEATHER_CONDITIONS
from .timeutil import (
    MINUTES_PER_DAY,
    MINUTES_PER_HOUR,
    calendar_components,
    date_to_minute,
    parse_date,
)

CALENDAR_COLUMNS = ("year", "month", "day_of_month", "day_of_week", "hour_of_day")
DEFAULT_DAILY_ANCHOR_HOUR = 17
DEFAULT_DAILY_WINDOW = 7  # days of history in the daily design matrix


class VariantError(ValueError):
    """The requested variant cannot be assembled from the given records."""


@dataclass(frozen=True)
class DatasetVariantSpec:
    id: str
    waiting_window: int = 24
    waiting_rolling: tuple[int, ...] = ()
    scaling: str = "zscore"
    weather_status: str = "none"  # none | five | ten
    hospital_census: bool = False
    census_window: int = 0  # 0 = current value only
    census_rolling: tuple[int, ...] = ()
    temperature: bool = False
    temperature_window: int = 0
    wind: bool = False
    humidity: bool = False
    esi_waiting_counts: bool = False
    esi_waiting_times: bool = False
    avg_waiting_time: bool = False
    avg_treatment_time: bool = False
    avg_boarding_time: bool = False
    treatment_count: bool = False
    boarding_count: bool = False
    holidays: bool = False
    football: bool = False
    extra_lag_features: tuple[str, ...] = ()
    covid_exclusion: tuple[str, str] = ("2020-01-01", "2021-05-01")

    @property
    def max_offset(self) -> int:
        """Largest look-back offset used by any block, in grid steps."""
        offsets = [self.waiting_window - 1]
        offsets += [w - 1 for w in self.waiting_rolling]
        if self.census_window:
            offsets.append(self.census_window - 1)
        offsets += [w - 1 for w in self.census_rolling]
        if self.temperature_window:
            offsets.append(self.temperature_window - 1)
        if self.extra_lag_features:
            offsets.append(24 - 1)  # the extra blocks are 24-wide with a 4-wide rolling
        return max(offsets)

    def covid_exclusion_minutes(self) -> tuple[int, int]:
        lo, hi = self.covid_exclusion
        return date_to_minute(parse_date(lo)), date_to_minute(parse_date(hi))


def load_catalog() -> dict[str, DatasetVariantSpec]:
    raw = json.loads(resources.files("edcast").joinpath("variants.json").read_text())
    covid = tuple(raw["covid_exclusion"])
    known = {f.name for f in fields(DatasetVariantSpec)}
    catalog: dict[str, DatasetVariantSpec] = {}
    for variant_id, entry in raw["variants"].items():
        kwargs = {}
        for key, value in entry.items():
            if key not in known:
                raise VariantError(f"{variant_id}: unknown catalog key {key!r}")
            kwargs[key] = tuple(value) if isinstance(value, list) else value
        catalog[variant_id] = DatasetVariantSpec(id=variant_id, covid_exclusion=covid, **kwargs)
    return catalog


_CATALOG: dict[str, DatasetVariantSpec] | None = None


def variant_spec(variant_id: str) -> DatasetVariantSpec:
    global _CATALOG
    if _CATALOG is None:
        _CATALOG = load_catalog()
    try:
        return _CATALOG[variant_id]
    except KeyError:
        raise VariantError(f"unknown dataset variant {variant_id!r}") from None


def variant_ids() -> tuple[str, ...]:
    global _CATALOG
    if _CATALOG is None:
        _CATALOG = load_catalog()
    return tuple(_CATALOG)


EXTRA_BLOCK_WINDOW = 24
EXTRA_BLOCK_ROLLING = 4


@dataclass
class _ColumnSet:
    names: list[str] = field(default_factory=list)
    arrays: list[np.ndarray] = field(default_factory=list)
    exempt: set[str] = field(default_factory=set)

    def add(self, name: str, values: np.ndarray, exempt: bool = False) -> None:
        self.names.append(name)
        self.arrays.append(np.asarray(values, dtype=np.float64))
        if exempt:
            self.exempt.add(name)

    def add_block(self, names: Sequence[str], matrix: np.ndarray) -> None:
        for pos, name in enumerate(names):
            self.add(name, matrix[:, pos])


def _one_hot(values: Sequence[str], vocabulary: Sequence[str], prefix: str, cols: _ColumnSet) -> None:
    seen = set(values)
    unknown = seen - set(vocabulary)
    if unknown:
        raise VariantError(f"unexpected {prefix} categories: {sorted(unknown)}")
    arr = np.asarray(values)
    for category in vocabulary:
        cols.add(f"{prefix}_{category}", (arr == category).astype(np.float64), exempt=True)


def _numeric_grid(records: Sequence, name: str) -> np.ndarray:
    return np.asarray([getattr(r, name) for r in records], dtype=np.float64)


def _assemble(
    timestamps: np.ndarray,
    records: Sequence,
    spec: DatasetVariantSpec,
    step_minutes: int,
    target_window: int,
    share_columns: bool,
) -> FeatureTable:
    """Shared assembly for hourly records and daily aggregates.

    ``share_columns`` marks tables whose categorical fields are fractions
    of an aggregation window rather than 0/1 indicators.
    """
    cols = _ColumnSet()
    spans = contiguous_spans(timestamps, step_minutes)

    def windowed(name: str, series: np.ndarray, window: int) -> tuple[tuple[str, ...], np.ndarray]:
        names: tuple[str, ...] | None = None
        chunks = []
        for span_id in np.unique(spans):
            mask = spans == span_id
            segment = series[mask]
            if window > len(segment):
                raise VariantError(
                    f"{spec.id}: span of {len(segment)} rows is shorter than the {window}-step window"
                )
            block_names, block = lagged_block(name, segment, window)
            names = block_names
            chunks.append(block)
        assert names is not None
        return names, np.concatenate(chunks, axis=0)

    def rolled(name: str, series: np.ndarray, w: int) -> None:
        chunks = []
        for span_id in np.unique(spans):
            mask = spans == span_id
            segment = series[mask]
            if w > len(segment):
                raise VariantError(f"{spec.id}: span too short for a {w}-step rolling mean")
            chunks.append(rolling_mean(segment, w))
        cols.add(f"{name}_roll_{w}", np.concatenate(chunks))

    waiting = _numeric_grid(records, "waiting_count")
    cols.add_block(*windowed("waiting_count", waiting, target_window))
    for w in spec.waiting_rolling:
        rolled("waiting_count", waiting, w)

    cols.add("eci", _numeric_grid(records, "eci"), exempt=True)
    for name in CALENDAR_COLUMNS:
        cols.add(name, _numeric_grid(records, name))

    if spec.esi_waiting_counts:
        for name in ("waiting_count_esi12", "waiting_count_esi3", "waiting_count_esi45"):
            cols.add(name, _numeric_grid(records, name))
    if spec.treatment_count:
        cols.add("treatment_count", _numeric_grid(records, "treatment_count"))
    if spec.boarding_count:
        cols.add("boarding_count", _numeric_grid(records, "boarding_count"))
    if spec.avg_waiting_time:
        cols.add("avg_waiting_time", _numeric_grid(records, "avg_waiting_time"))
    if spec.esi_waiting_times:
        for name in ("avg_waiting_time_esi12", "avg_waiting_time_esi3", "avg_waiting_time_esi45"):
            cols.add(name, _numeric_grid(records, name))
    if spec.avg_treatment_time:
        cols.add("avg_treatment_time", _numeric_grid(records, "avg_treatment_time"))
    if spec.avg_boarding_time:
        cols.add("avg_boarding_time", _numeric_grid(records, "avg_boarding_time"))

    for name in spec.extra_lag_features:
        series = _numeric_grid(records, name)
        block_names, block = windowed(name, series, EXTRA_BLOCK_WINDOW)
        # the current-value column is already present for these features
        cols.add_block(block_names[1:], block[:, 1:])
        rolled(name, series, EXTRA_BLOCK_ROLLING)

    if spec.hospital_census:
        census = _numeric_grid(records, "hospital_census")
        if spec.census_window:
            cols.add_block(*windowed("hospital_census", census, spec.census_window))
        else:
            cols.add("hospital_census", census)
        for w in spec.census_rolling:
            rolled("hospital_census", census, w)

    if spec.temperature:
        temp = _numeric_grid(records, "temperature")
        if spec.temperature_window:
            cols.add_block(*windowed("temperature", temp, spec.temperature_window))
        else:
            cols.add("temperature", temp)
    if spec.wind:
        cols.add("wind_speed", _numeric_grid(records, "wind_speed"))
    if spec.humidity:
        cols.add("humidity", _numeric_grid(records, "humidity"))

    if spec.weather_status == "five":
        if share_columns:
            for category in WEATHER_FIVE:
                cols.add(f"weather5_{category}", _numeric_grid(records, f"share5_{category}"), exempt=True)
        else:
            _one_hot([r.condition5 for r in records], WEATHER_FIVE, "weather5", cols)
    elif spec.weather_status == "ten":
        if share_columns:
            for category in WEATHER_CONDITIONS:
                cols.add(f"weather10_{category}", _numeric_grid(records, f"share10_{category}"), exempt=True)
        else:
            _one_hot([r.condition10 for r in records], WEATHER_CONDITIONS, "weather10", cols)
    elif spec.weather_status != "none":
        raise VariantError(f"unknown weather status {spec.weather_status!r}")

    if spec.holidays:
        cols.add("is_holiday", _numeric_grid(records, "is_holiday"), exempt=True)
    if spec.football:
        cols.add("is_football", _numeric_grid(records, "is_football"), exempt=True)

    matrix = np.column_stack(cols.arrays)
    complete = ~np.isnan(matrix).any(axis=1)
    return FeatureTable(
        tuple(cols.names),
        matrix[complete],
        timestamps[complete],
        frozenset(cols.exempt),
    )


def assemble_variant(records: Sequence[HourlyRecord], spec: DatasetVariantSpec) -> FeatureTable:
    """Hourly design matrix for one variant, lag-incomplete rows trimmed."""
    if not records:
        raise VariantError("no hourly records to assemble")
    timestamps = np.asarray([r.hour for r in records], dtype=np.int64)
    if np.any(np.diff(timestamps) <= 0):
        raise VariantError("hourly records must be strictly increasing in time")
    return _assemble(timestamps, records, spec, MINUTES_PER_HOUR, spec.waiting_window, False)


@dataclass(frozen=True)
class DailyRecord:
    """Means of one 24-hour window ending at the anchor hour."""

    window_end: int
    waiting_count: float
    waiting_count_esi12: float
    waiting_count_esi3: float
    waiting_count_esi45: float
    avg_waiting_time: float
    avg_waiting_time_esi12: float
    avg_waiting_time_esi3: float
    avg_waiting_time_esi45: float
    treatment_count: float
    avg_treatment_time: float
    boarding_count: float
    avg_boarding_time: float
    hospital_census: float
    eci: float  # fraction of window hours flagged
    temperature: float
    wind_speed: float
    humidity: float
    year: int
    month: int
    day_of_month: int
    day_of_week: int
    hour_of_day: int
    is_holiday: float
    is_football: float
    share5: dict[str, float] = field(default_factory=dict, repr=False)
    share10: dict[str, float] = field(default_factory=dict, repr=False)

    def __getattr__(self, name: str):
        if name.startswith("share5_"):
            return self.share5[name[len("share5_") :]]
        if name.startswith("share10_"):
            return self.share10[name[len("share10_") :]]
        raise AttributeError(name)


_DAILY_MEAN_FIELDS = (
    "waiting_count",
    "waiting_count_esi12",
    "waiting_count_esi3",
    "waiting_count_esi45",
    "avg_waiting_time",
    "avg_waiting_time_esi12",
    "avg_waiting_time_esi3",
    "avg_waiting_time_esi45",
    "treatment_count",
    "avg_treatment_time",
    "boarding_count",
    "avg_boarding_time",
    "hospital_census",
    "eci",
    "temperature",
    "wind_speed",
    "humidity",
    "is_holiday",
    "is_football",
)


def daily_aggregate(
    records: Sequence[HourlyRecord], anchor_hour: int = DEFAULT_DAILY_ANCHOR_HOUR
) -> list[DailyRecord]:
    """Average consecutive 24-hour windows ending at the anchor hour.

    A window is kept only when all 24 of its hours are present; windows
    straddling an excluded stretch are dropped. Categorical fields become
    within-window shares, so they still sum to 1 per category set.
    """
    if not 0 <= anchor_hour <= 23:
        raise ValueError("anchor hour must be in 0..23")
    if not records:
        return []
    by_hour = {r.hour: r for r in records}
    first, last = records[0].hour, records[-1].hour

    first_midnight = first - (first % MINUTES_PER_DAY)
    end = first_midnight + anchor_hour * MINUTES_PER_HOUR
    while end - MINUTES_PER_DAY < first:
        end += MINUTES_PER_DAY

    out = []
    while end - MINUTES_PER_HOUR <= last:
        hours = [end - MINUTES_PER_DAY + i * MINUTES_PER_HOUR for i in range(24)]
        window = [by_hour.get(h) for h in hours]
        if all(w is not None for w in window):
            year, month, dom, dow, hod = calendar_components(end)
            means = {
                name: float(np.mean([getattr(w, name) for w in window]))
                for name in _DAILY_MEAN_FIELDS
            }
            share5 = {
                c: sum(1 for w in window if w.condition5 == c) / 24.0 for c in WEATHER_FIVE
            }
            share10 = {
                c: sum(1 for w in window if w.condition10 == c) / 24.0
                for c in WEATHER_CONDITIONS
            }
            out.append(
                DailyRecord(
                    window_end=end,
                    year=year,
                    month=month,
                    day_of_month=dom,
                    day_of_week=dow,
                    hour_of_day=hod,
                    share5=share5,
                    share10=share10,
                    **means,
                )
            )
        end += MINUTES_PER_DAY
    return out


def assemble_daily_variant(
    daily: Sequence[DailyRecord],
    spec: DatasetVariantSpec,
    window_days: int = DEFAULT_DAILY_WINDOW,
) -> FeatureTable:
    """Daily design matrix: the variant's blocks over day-windowed series.

    Lag and rolling widths are reinterpreted in days; the target window
    defaults to seven daily means.
    """
    if not daily:
        raise VariantError("no daily records to assemble")
    timestamps = np.asarray([d.window_end for d in daily], dtype=np.int64)
    daily_spec = replace(
        spec,
        waiting_window=window_days,
        waiting_rolling=tuple(min(w, window_days) for w in spec.waiting_rolling),
        census_window=min(spec.census_window, window_days) if spec.census_window else 0,
        census_rolling=tuple(min(w, window_days) for w in spec.census_rolling),
        temperature_window=min(spec.temperature_window, window_days)
        if spec.temperature_window
        else 0,
        extra_lag_features=(),
    )
    return _assemble(timestamps, daily, daily_spec, MINUTES_PER_DAY, window_days, True)
