"""Parse and validate the four source tables, clean them, and index hours.

File formats (comma-delimited UTF-8, header row required, timestamps
YYYY-MM-DDTHH:MM at minute precision):

    visits.csv    visit_id,patient_id,location,arrival,departure,esi
    boarding.csv  visit_id,bed_request,ed_checkout
    inpatient.csv stay_id,admit,discharge
    weather.csv   hour,temp_f,wind_mps,humidity_pct,condition
    calendar.csv  date,kind            (kind: holiday | football)

Malformed rows never abort a parse: each bad row is reported with its line
number and skipped. A missing or wrong header is a schema error.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import date
from typing import Iterable, Iterator, Sequence, TextIO

from .timeutil import (
    MINUTES_PER_HOUR,
    format_minute,
    hour_floor,
    is_hour_aligned,
    parse_date,
    parse_minute,
)

WAITING = "waiting"
TREATMENT = "treatment"

# The ten raw weather categories reported by the hourly archive.
WEATHER_CONDITIONS = (
    "Clear",
    "Clouds",
    "Rain",
    "Mist",
    "Thunderstorm",
    "Snow",
    "Drizzle",
    "Haze",
    "Fog",
    "Smoke",
)

DEFAULT_MAX_WAIT_MINUTES = 540  # drop waiting-room stays longer than 9 hours


class SchemaError(ValueError):
    """The file header does not match the documented schema."""


class DataError(ValueError):
    """The data violates a contract that cannot be skipped row-by-row."""


@dataclass(frozen=True)
class RowError:
    line: int
    message: str


@dataclass(frozen=True)
class VisitInterval:
    visit_id: str
    patient_id: str
    location: str  # WAITING or TREATMENT
    arrival: int
    departure: int
    esi: int | None = None


@dataclass(frozen=True)
class BoardingInterval:
    visit_id: str
    bed_request: int
    ed_checkout: int


@dataclass(frozen=True)
class InpatientStay:
    stay_id: str
    admit: int
    discharge: int


@dataclass(frozen=True)
class WeatherHour:
    hour: int
    temperature: float
    wind_speed: float
    humidity: float
    condition: str


@dataclass(frozen=True)
class CalendarTable:
    holidays: frozenset[date]
    football_games: frozenset[date]


@dataclass(frozen=True)
class HourIndex:
    """Hour grid [start, start + 60*length) minus half-open excluded ranges."""

    start: int
    length: int
    exclusions: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        if not is_hour_aligned(self.start):
            raise DataError("hour index start must be hour-aligned")
        if self.length <= 0:
            raise DataError("hour index must cover at least one hour")
        end = self.end
        prev = self.start
        for lo, hi in self.exclusions:
            if not (is_hour_aligned(lo) and is_hour_aligned(hi)):
                raise DataError("exclusion bounds must be hour-aligned")
            if lo >= hi:
                raise DataError("exclusion range is empty or reversed")
            if lo < prev or hi > end:
                raise DataError("exclusions must be sorted, disjoint, and inside the index")
            prev = hi
        if self.effective_hours <= 0:
            raise DataError("exclusions remove every hour of the index")

    @property
    def end(self) -> int:
        return self.start + MINUTES_PER_HOUR * self.length

    @property
    def excluded_hours(self) -> int:
        return sum((hi - lo) // MINUTES_PER_HOUR for lo, hi in self.exclusions)

    @property
    def effective_hours(self) -> int:
        return self.length - self.excluded_hours

    def is_excluded(self, minute: int) -> bool:
        return any(lo <= minute < hi for lo, hi in self.exclusions)

    def hours(self) -> Iterator[int]:
        """Start minutes of the non-excluded hours, ascending."""
        cursor = self.start
        for lo, hi in self.exclusions:
            yield from range(cursor, lo, MINUTES_PER_HOUR)
            cursor = hi
        yield from range(cursor, self.end, MINUTES_PER_HOUR)


def _reader(source: TextIO | str):
    if isinstance(source, str):
        source = io.StringIO(source)
    return csv.reader(source)


def _check_header(row: list[str] | None, expected: Sequence[str], name: str) -> None:
    if row is None or [c.strip() for c in row] != list(expected):
        raise SchemaError(f"{name}: expected header {','.join(expected)}")


def _parse_table(
    source: TextIO | str,
    expected_header: Sequence[str],
    name: str,
    convert,
) -> tuple[list, list[RowError]]:
    reader = _reader(source)
    header = next(reader, None)
    _check_header(header, expected_header, name)
    records, errors = [], []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(expected_header):
            errors.append(RowError(line_no, f"expected {len(expected_header)} fields, got {len(row)}"))
            continue
        try:
            records.append(convert(row))
        except (ValueError, KeyError) as exc:
            errors.append(RowError(line_no, str(exc)))
    return records, errors


VISITS_HEADER = ("visit_id", "patient_id", "location", "arrival", "departure", "esi")
BOARDING_HEADER = ("visit_id", "bed_request", "ed_checkout")
INPATIENT_HEADER = ("stay_id", "admit", "discharge")
WEATHER_HEADER = ("hour", "temp_f", "wind_mps", "humidity_pct", "condition")
CALENDAR_HEADER = ("date", "kind")


def _visit_from_row(row: list[str]) -> VisitInterval:
    visit_id, patient_id, location, arrival, departure, esi = (c.strip() for c in row)
    loc = location.lower()
    if loc not in (WAITING, TREATMENT):
        raise ValueError(f"unknown location {location!r}")
    a, d = parse_minute(arrival), parse_minute(departure)
    if d < a:
        raise ValueError("departure precedes arrival")
    esi_value: int | None = None
    if esi:
        esi_value = int(esi)
        if not 1 <= esi_value <= 5:
            raise ValueError(f"esi {esi_value} outside 1-5")
    return VisitInterval(visit_id, patient_id, loc, a, d, esi_value)


def parse_visit_events(source: TextIO | str) -> tuple[list[VisitInterval], list[RowError]]:
    return _parse_table(source, VISITS_HEADER, "visits", _visit_from_row)


def _boarding_from_row(row: list[str]) -> BoardingInterval:
    visit_id, req, out = (c.strip() for c in row)
    a, d = parse_minute(req), parse_minute(out)
    if d < a:
        raise ValueError("ed_checkout precedes bed_request")
    return BoardingInterval(visit_id, a, d)


def parse_boarding_events(source: TextIO | str) -> tuple[list[BoardingInterval], list[RowError]]:
    return _parse_table(source, BOARDING_HEADER, "boarding", _boarding_from_row)


def _stay_from_row(row: list[str]) -> InpatientStay:
    stay_id, admit, discharge = (c.strip() for c in row)
    a, d = parse_minute(admit), parse_minute(discharge)
    if d < a:
        raise ValueError("discharge precedes admit")
    return InpatientStay(stay_id, a, d)


def parse_inpatient_stays(source: TextIO | str) -> tuple[list[InpatientStay], list[RowError]]:
    return _parse_table(source, INPATIENT_HEADER, "inpatient", _stay_from_row)


def _weather_from_row(row: list[str]) -> WeatherHour:
    hour, temp, wind, humidity, condition = (c.strip() for c in row)
    minute = parse_minute(hour)
    if not is_hour_aligned(minute):
        raise ValueError("weather hour is not hour-aligned")
    h = float(humidity)
    if not 0.0 <= h <= 100.0:
        raise ValueError(f"humidity {h} outside [0, 100]")
    if condition not in WEATHER_CONDITIONS:
        raise ValueError(f"unknown weather condition {condition!r}")
    return WeatherHour(minute, float(temp), float(wind), h, condition)


def parse_weather(source: TextIO | str) -> tuple[list[WeatherHour], list[RowError]]:
    return _parse_table(source, WEATHER_HEADER, "weather", _weather_from_row)


def parse_calendar(source: TextIO | str) -> tuple[CalendarTable, list[RowError]]:
    def convert(row: list[str]) -> tuple[str, date]:
        day, kind = (c.strip() for c in row)
        if kind not in ("holiday", "football"):
            raise ValueError(f"unknown calendar kind {kind!r}")
        return kind, parse_date(day)

    rows, errors = _parse_table(source, CALENDAR_HEADER, "calendar", convert)
    holidays = frozenset(d for kind, d in rows if kind == "holiday")
    football = frozenset(d for kind, d in rows if kind == "football")
    return CalendarTable(holidays, football), errors


def clean_visits(
    visits: Sequence[VisitInterval], max_wait_minutes: int = DEFAULT_MAX_WAIT_MINUTES
) -> tuple[list[VisitInterval], int]:
    """Drop waiting-room stays strictly longer than the cap.

    Treatment-room intervals are never dropped by this rule; a stay of
    exactly ``max_wait_minutes`` is kept.
    """
    if max_wait_minutes <= 0:
        raise ValueError("max_wait_minutes must be positive")
    kept = [
        v
        for v in visits
        if v.location != WAITING or (v.departure - v.arrival) <= max_wait_minutes
    ]
    return kept, len(visits) - len(kept)


def build_hour_index(
    start: int, end: int, exclusions: Iterable[tuple[int, int]] = ()
) -> HourIndex:
    """Hour grid over [start, end) with half-open excluded minute ranges."""
    if not (is_hour_aligned(start) and is_hour_aligned(end)):
        raise DataError("start and end must be hour-aligned")
    if end <= start:
        raise DataError("end must be after start")
    normalized = []
    for lo, hi in exclusions:
        if lo >= hi:
            raise DataError("exclusion range is empty or reversed")
        if lo < start or hi > end:
            raise DataError("exclusion falls outside [start, end)")
        normalized.append((hour_floor(lo), hour_floor(hi + MINUTES_PER_HOUR - 1)))
    normalized.sort()
    for (_, prev_hi), (lo, _) in zip(normalized, normalized[1:]):
        if lo < prev_hi:
            raise DataError("exclusions overlap")
    return HourIndex(start, (end - start) // MINUTES_PER_HOUR, tuple(normalized))


# --- serialization (inverse of the parsers; used by synthgen and round trips)


def _write_rows(out: TextIO, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)


def write_visits(out: TextIO, visits: Iterable[VisitInterval]) -> None:
    _write_rows(
        out,
        VISITS_HEADER,
        (
            (
                v.visit_id,
                v.patient_id,
                v.location,
                format_minute(v.arrival),
                format_minute(v.departure),
                "" if v.esi is None else str(v.esi),
            )
            for v in visits
        ),
    )


def write_boarding(out: TextIO, events: Iterable[BoardingInterval]) -> None:
    _write_rows(
        out,
        BOARDING_HEADER,
        ((b.visit_id, format_minute(b.bed_request), format_minute(b.ed_checkout)) for b in events),
    )


def write_inpatient(out: TextIO, stays: Iterable[InpatientStay]) -> None:
    _write_rows(
        out,
        INPATIENT_HEADER,
        ((s.stay_id, format_minute(s.admit), format_minute(s.discharge)) for s in stays),
    )


def write_weather(out: TextIO, hours: Iterable[WeatherHour]) -> None:
    _write_rows(
        out,
        WEATHER_HEADER,
        (
            (format_minute(w.hour), repr(w.temperature), repr(w.wind_speed), repr(w.humidity), w.condition)
            for w in hours
        ),
    )


def write_calendar(out: TextIO, table: CalendarTable) -> None:
    rows = [(d.isoformat(), "holiday") for d in sorted(table.holidays)]
    rows += [(d.isoformat(), "football") for d in sorted(table.football_games)]
    _write_rows(out, CALENDAR_HEADER, rows)
