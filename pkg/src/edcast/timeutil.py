"""Minute-resolution local-clock timestamps.

All event times in this package are integers: minutes since 1970-01-01T00:00
on a naive local clock. There is no timezone or DST arithmetic anywhere.
"""

from __future__ import annotations

from datetime import date, datetime, timedelta

EPOCH = datetime(1970, 1, 1)
MINUTES_PER_HOUR = 60
MINUTES_PER_DAY = 1440


def parse_minute(text: str) -> int:
    """Parse 'YYYY-MM-DDTHH:MM' into minutes since epoch."""
    dt = datetime.strptime(text, "%Y-%m-%dT%H:%M")
    return int((dt - EPOCH) // timedelta(minutes=1))


def format_minute(minute: int) -> str:
    return (EPOCH + timedelta(minutes=int(minute))).strftime("%Y-%m-%dT%H:%M")


def parse_date(text: str) -> date:
    return datetime.strptime(text, "%Y-%m-%d").date()


def date_to_minute(d: date) -> int:
    """Midnight of the given calendar date, in minutes since epoch."""
    return int((datetime(d.year, d.month, d.day) - EPOCH) // timedelta(minutes=1))


def minute_to_date(minute: int) -> date:
    return (EPOCH + timedelta(minutes=int(minute))).date()


def hour_floor(minute: int) -> int:
    return minute - (minute % MINUTES_PER_HOUR)


def is_hour_aligned(minute: int) -> bool:
    return minute % MINUTES_PER_HOUR == 0


def calendar_components(minute: int) -> tuple[int, int, int, int, int]:
    """(year, month, day_of_month, day_of_week, hour_of_day), Monday = 0."""
    dt = EPOCH + timedelta(minutes=int(minute))
    return dt.year, dt.month, dt.day, dt.weekday(), dt.hour
