"""Hourly patient-flow metric series and the integrated hourly record.

An event interval [a, d] (closed, minute resolution) belongs to the hourly
bucket [t, t+60) exactly when a < t+60 and d >= t, i.e. in every hour from
floor(a/60) through floor(d/60) inclusive. A stay from 10:10 to 11:15 is
counted in both the 10:00 and the 11:00 hours; one ending exactly at 12:00
still counts in the 12:00 hour. The same membership rule drives occupancy
counts (waiting, treatment, boarding, hospital census) and dwell-time
averages.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields
from typing import Iterable, Sequence, TextIO

import numpy as np

from .featurebuild import recategorize_weather
from .ingestion import (
    CalendarTable,
    DataError,
    HourIndex,
    VisitInterval,
    WeatherHour,
)
from .timeutil import (
    MINUTES_PER_HOUR,
    calendar_components,
    format_minute,
    minute_to_date,
    parse_minute,
)

# Forward-fill limit for holes in the hourly weather archive.
MAX_WEATHER_GAP_HOURS = 6

# Fraction of the hour index used to fit the extreme-case threshold when no
# explicit parameters are supplied; matches the chronological training share
# so the feature never sees future data.
ECI_FIT_FRACTION = 0.70


@dataclass(frozen=True)
class HourlySeries:
    index: HourIndex
    values: np.ndarray

    def __post_init__(self) -> None:
        if len(self.values) != self.index.effective_hours:
            raise DataError("series length does not match the hour index")


@dataclass(frozen=True)
class ECIParams:
    mean: float
    sd: float
    multiplier: float = 2.0

    def __post_init__(self) -> None:
        if self.sd < 0:
            raise DataError("standard deviation must be non-negative")

    @property
    def threshold(self) -> float:
        return self.mean + self.multiplier * self.sd


def _hour_span(start: int, end: int) -> tuple[int, int]:
    """First and last hour numbers (minute // 60) touched by [start, end]."""
    return start // MINUTES_PER_HOUR, end // MINUTES_PER_HOUR


def _positions(index: HourIndex) -> dict[int, int]:
    return {hour: i for i, hour in enumerate(index.hours())}


def interval_census(
    intervals: Iterable[tuple[int, int]], index: HourIndex
) -> HourlySeries:
    """Per-hour count of intervals present during each indexed hour."""
    counts = np.zeros(index.length, dtype=np.int64)
    base = index.start // MINUTES_PER_HOUR
    for start, end in intervals:
        if end < start:
            raise DataError("interval ends before it starts")
        h0, h1 = _hour_span(start, end)
        lo = max(h0 - base, 0)
        hi = min(h1 - base, index.length - 1)
        if lo <= hi:
            counts[lo : hi + 1] += 1
    keep = [(h - index.start) // MINUTES_PER_HOUR for h in index.hours()]
    return HourlySeries(index, counts[keep])


def stratified_census(
    visits: Sequence[VisitInterval], index: HourIndex
) -> tuple[HourlySeries, HourlySeries, HourlySeries, HourlySeries]:
    """Waiting occupancy: total plus the ESI 1-2 / 3 / 4-5 strata.

    Visits without an ESI label count toward the total only.
    """
    def census_of(subset: Iterable[VisitInterval]) -> HourlySeries:
        return interval_census(((v.arrival, v.departure) for v in subset), index)

    total = census_of(visits)
    esi12 = census_of(v for v in visits if v.esi in (1, 2))
    esi3 = census_of(v for v in visits if v.esi == 3)
    esi45 = census_of(v for v in visits if v.esi in (4, 5))
    return total, esi12, esi3, esi45


def avg_dwell_time(
    intervals: Iterable[tuple[int, int]], index: HourIndex
) -> HourlySeries:
    """Mean elapsed stay, in minutes, over each hour's member intervals.

    A member's dwell at hour t is clipped to what has been observed by the
    end of that hour: min(end, t+60) - start. Hours with no members are 0.
    """
    sums = np.zeros(index.length, dtype=np.float64)
    counts = np.zeros(index.length, dtype=np.int64)
    base = index.start // MINUTES_PER_HOUR
    grid_end = index.length - 1
    for start, end in intervals:
        if end < start:
            raise DataError("interval ends before it starts")
        h0, h1 = _hour_span(start, end)
        lo = max(h0 - base, 0)
        hi = min(h1 - base, grid_end)
        for pos in range(lo, hi + 1):
            hour_end = index.start + (pos + 1) * MINUTES_PER_HOUR
            sums[pos] += min(end, hour_end) - start
            counts[pos] += 1
    keep = [(h - index.start) // MINUTES_PER_HOUR for h in index.hours()]
    means = np.divide(
        sums[keep],
        counts[keep],
        out=np.zeros(len(keep), dtype=np.float64),
        where=counts[keep] > 0,
    )
    return HourlySeries(index, means)


def eci_fit(series: HourlySeries | Sequence[float]) -> ECIParams:
    """Mean and population standard deviation of a series."""
    values = series.values if isinstance(series, HourlySeries) else np.asarray(series, float)
    if len(values) == 0:
        raise DataError("cannot fit extreme-case parameters on an empty series")
    return ECIParams(float(np.mean(values)), float(np.std(values)))


def extreme_case_indicator(series: HourlySeries, params: ECIParams) -> HourlySeries:
    """1 where the value reaches mean + multiplier * sd, else 0."""
    flags = (series.values >= params.threshold).astype(np.int64)
    return HourlySeries(series.index, flags)


@dataclass(frozen=True)
class HourlyRecord:
    hour: int
    waiting_count: int
    waiting_count_esi12: int
    waiting_count_esi3: int
    waiting_count_esi45: int
    avg_waiting_time: float
    avg_waiting_time_esi12: float
    avg_waiting_time_esi3: float
    avg_waiting_time_esi45: float
    treatment_count: int
    avg_treatment_time: float
    boarding_count: int
    avg_boarding_time: float
    hospital_census: int
    eci: int
    temperature: float
    wind_speed: float
    humidity: float
    condition10: str
    condition5: str
    year: int
    month: int
    day_of_month: int
    day_of_week: int
    hour_of_day: int
    is_holiday: int
    is_football: int


@dataclass(frozen=True)
class SeriesBundle:
    """Everything computed from event intervals, on one shared hour index."""

    waiting: HourlySeries
    waiting_esi12: HourlySeries
    waiting_esi3: HourlySeries
    waiting_esi45: HourlySeries
    wait_time: HourlySeries
    wait_time_esi12: HourlySeries
    wait_time_esi3: HourlySeries
    wait_time_esi45: HourlySeries
    treatment: HourlySeries
    treatment_time: HourlySeries
    boarding: HourlySeries
    boarding_time: HourlySeries
    hospital_census: HourlySeries


def compute_series_bundle(
    waiting_visits: Sequence[VisitInterval],
    treatment_visits: Sequence[VisitInterval],
    boarding: Sequence,
    stays: Sequence,
    index: HourIndex,
) -> SeriesBundle:
    total, esi12, esi3, esi45 = stratified_census(waiting_visits, index)

    def dwell(subset: Iterable[VisitInterval]) -> HourlySeries:
        return avg_dwell_time(((v.arrival, v.departure) for v in subset), index)

    return SeriesBundle(
        waiting=total,
        waiting_esi12=esi12,
        waiting_esi3=esi3,
        waiting_esi45=esi45,
        wait_time=dwell(waiting_visits),
        wait_time_esi12=dwell(v for v in waiting_visits if v.esi in (1, 2)),
        wait_time_esi3=dwell(v for v in waiting_visits if v.esi == 3),
        wait_time_esi45=dwell(v for v in waiting_visits if v.esi in (4, 5)),
        treatment=interval_census(((v.arrival, v.departure) for v in treatment_visits), index),
        treatment_time=dwell(treatment_visits),
        boarding=interval_census(((b.bed_request, b.ed_checkout) for b in boarding), index),
        boarding_time=avg_dwell_time(((b.bed_request, b.ed_checkout) for b in boarding), index),
        hospital_census=interval_census(((s.admit, s.discharge) for s in stays), index),
    )


def _filled_weather(weather: Sequence[WeatherHour], index: HourIndex) -> dict[int, WeatherHour]:
    """Weather keyed by hour, forward-filling gaps of up to the fill limit."""
    observed = {w.hour: w for w in weather}
    filled: dict[int, WeatherHour] = {}
    last: WeatherHour | None = None
    gap = 0
    for hour in index.hours():
        if hour in observed:
            last = observed[hour]
            gap = 0
        else:
            gap += 1
            if last is None or gap > MAX_WEATHER_GAP_HOURS:
                raise DataError(f"weather gap at {format_minute(hour)} exceeds fill limit")
        filled[hour] = WeatherHour(hour, last.temperature, last.wind_speed, last.humidity, last.condition)
    return filled


def assemble_hourly_records(
    bundle: SeriesBundle,
    weather: Sequence[WeatherHour],
    calendar: CalendarTable,
    index: HourIndex,
    eci_params: ECIParams | None = None,
) -> list[HourlyRecord]:
    """Merge metric series, weather, and calendar into one row per hour.

    When no extreme-case parameters are given they are fitted on the first
    ECI_FIT_FRACTION of the waiting series, keeping the feature blind to
    the later (validation/test) portion.
    """
    if eci_params is None:
        n_fit = max(1, int(len(bundle.waiting.values) * ECI_FIT_FRACTION))
        eci_params = eci_fit(bundle.waiting.values[:n_fit])
    eci = extreme_case_indicator(bundle.waiting, eci_params)
    weather_by_hour = _filled_weather(weather, index)

    records = []
    for i, hour in enumerate(index.hours()):
        w = weather_by_hour[hour]
        day = minute_to_date(hour)
        year, month, dom, dow, hod = calendar_components(hour)
        records.append(
            HourlyRecord(
                hour=hour,
                waiting_count=int(bundle.waiting.values[i]),
                waiting_count_esi12=int(bundle.waiting_esi12.values[i]),
                waiting_count_esi3=int(bundle.waiting_esi3.values[i]),
                waiting_count_esi45=int(bundle.waiting_esi45.values[i]),
                avg_waiting_time=float(bundle.wait_time.values[i]),
                avg_waiting_time_esi12=float(bundle.wait_time_esi12.values[i]),
                avg_waiting_time_esi3=float(bundle.wait_time_esi3.values[i]),
                avg_waiting_time_esi45=float(bundle.wait_time_esi45.values[i]),
                treatment_count=int(bundle.treatment.values[i]),
                avg_treatment_time=float(bundle.treatment_time.values[i]),
                boarding_count=int(bundle.boarding.values[i]),
                avg_boarding_time=float(bundle.boarding_time.values[i]),
                hospital_census=int(bundle.hospital_census.values[i]),
                eci=int(eci.values[i]),
                temperature=w.temperature,
                wind_speed=w.wind_speed,
                humidity=w.humidity,
                condition10=w.condition,
                condition5=recategorize_weather(w.condition),
                year=year,
                month=month,
                day_of_month=dom,
                day_of_week=dow,
                hour_of_day=hod,
                is_holiday=int(day in calendar.holidays),
                is_football=int(day in calendar.football_games),
            )
        )
    return records


INTEGRATED_HEADER = tuple(f.name for f in fields(HourlyRecord))

_INT_FIELDS = {
    "hour",
    "waiting_count",
    "waiting_count_esi12",
    "waiting_count_esi3",
    "waiting_count_esi45",
    "treatment_count",
    "boarding_count",
    "hospital_census",
    "eci",
    "year",
    "month",
    "day_of_month",
    "day_of_week",
    "hour_of_day",
    "is_holiday",
    "is_football",
}
_STR_FIELDS = {"condition10", "condition5"}


def write_integrated(out: TextIO, records: Iterable[HourlyRecord]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(INTEGRATED_HEADER)
    for r in records:
        row = []
        for name in INTEGRATED_HEADER:
            value = getattr(r, name)
            if name == "hour":
                row.append(format_minute(value))
            elif name in _STR_FIELDS:
                row.append(value)
            elif name in _INT_FIELDS:
                row.append(str(value))
            else:
                row.append(repr(value))
        writer.writerow(row)


def read_integrated(source: TextIO | str) -> list[HourlyRecord]:
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or tuple(header) != INTEGRATED_HEADER:
        raise DataError("integrated.csv header does not match the documented order")
    records = []
    for row in reader:
        if not row:
            continue
        kwargs = {}
        for name, cell in zip(INTEGRATED_HEADER, row):
            if name == "hour":
                kwargs[name] = parse_minute(cell)
            elif name in _STR_FIELDS:
                kwargs[name] = cell
            elif name in _INT_FIELDS:
                kwargs[name] = int(cell)
            else:
                kwargs[name] = float(cell)
        records.append(HourlyRecord(**kwargs))
    return records
