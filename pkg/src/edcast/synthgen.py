"""Seeded synthetic event tables with planted diurnal and weekly structure.

The generator emits exactly the ingestion CSV schemas plus truth.csv, its
own per-hour occupancy ledger computed by minute scanning, so the whole
pipeline can be checked against ground truth instead of statistics. Every
draw comes from per-day Philox substreams: identical configs produce
byte-identical files, and days are independent streams.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from . import rng
from .ingestion import (
    BoardingInterval,
    CalendarTable,
    InpatientStay,
    VisitInterval,
    WeatherHour,
    write_boarding,
    write_calendar,
    write_inpatient,
    write_visits,
    write_weather,
)
from .timeutil import (
    MINUTES_PER_DAY,
    MINUTES_PER_HOUR,
    format_minute,
    is_hour_aligned,
    minute_to_date,
)

TRUTH_HEADER = ("hour", "true_waiting_count", "true_treatment_count", "true_boarding_count")

# Rough shares of the ten raw weather categories in an hourly archive.
_WEATHER_SHARES = (
    ("Clouds", 0.575),
    ("Clear", 0.23),
    ("Rain", 0.15),
    ("Mist", 0.026),
    ("Thunderstorm", 0.013),
    ("Drizzle", 0.002),
    ("Fog", 0.0013),
    ("Haze", 0.0012),
    ("Snow", 0.0006),
    ("Smoke", 0.0009),
)

_HOLIDAY_MONTH_DAYS = (
    (1, 1),
    (1, 20),
    (2, 17),
    (5, 25),
    (6, 19),
    (7, 4),
    (9, 7),
    (10, 12),
    (11, 11),
    (12, 25),
)

FOOTBALL_GAMES_PER_YEAR = 13


@dataclass(frozen=True)
class BurstSpec:
    """Extra demand on specific dates (ISO strings), rate multiplied."""

    dates: tuple[str, ...]
    multiplier: float = 2.0


@dataclass(frozen=True)
class SynthConfig:
    start: int  # minutes since epoch, hour-aligned
    end: int
    base_arrival_rate: float = 12.0  # patients per hour
    diurnal_amplitude: float = 0.5
    diurnal_peak_hour: int = 19
    weekly_amplitude: float = 0.15
    weekly_peak_hour_of_week: int = 19  # Monday 19:00
    mean_wait: float = 90.0  # minutes
    mean_treatment: float = 180.0
    admit_probability: float = 0.30
    mean_boarding: float = 55.0
    mean_inpatient: float = 2880.0
    esi_distribution: tuple[float, float, float] = (0.264, 0.583, 0.147)
    max_wait_minutes: int = 540  # waits are capped here so no visit is an outlier
    service_distribution: str = "exponential"  # or "lognormal"
    extreme_burst: BurstSpec | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if not (is_hour_aligned(self.start) and is_hour_aligned(self.end)):
            raise ValueError("span bounds must be hour-aligned")
        if self.end <= self.start:
            raise ValueError("span must be non-empty")
        if self.base_arrival_rate <= 0:
            raise ValueError("arrival rate must be positive")
        for name in ("mean_wait", "mean_treatment", "mean_boarding", "mean_inpatient"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.admit_probability <= 1:
            raise ValueError("admit_probability is a probability")
        weights = self.esi_distribution
        if len(weights) != 3 or any(not 0 <= w <= 1 for w in weights) or sum(weights) <= 0:
            raise ValueError("esi_distribution needs three non-negative weights")
        if self.service_distribution not in ("exponential", "lognormal"):
            raise ValueError("service_distribution must be exponential or lognormal")


@dataclass(frozen=True)
class World:
    visits: list[VisitInterval]
    boarding: list[BoardingInterval]
    inpatient: list[InpatientStay]
    weather: list[WeatherHour]
    calendar: CalendarTable
    truth: list[tuple[int, int, int, int]]  # (hour, waiting, treatment, boarding)


def hourly_rate(config: SynthConfig, hour_minute: int) -> float:
    """Arrival intensity for the hour starting at the given minute."""
    hod = (hour_minute // MINUTES_PER_HOUR) % 24
    how = (hour_minute // MINUTES_PER_HOUR) % 168
    diurnal = 1.0 + config.diurnal_amplitude * math.cos(
        2 * math.pi * (hod - config.diurnal_peak_hour) / 24.0
    )
    weekly = 1.0 + config.weekly_amplitude * math.cos(
        2 * math.pi * (how - config.weekly_peak_hour_of_week) / 168.0
    )
    burst = 1.0
    if config.extreme_burst and minute_to_date(hour_minute).isoformat() in config.extreme_burst.dates:
        burst = config.extreme_burst.multiplier
    rate = config.base_arrival_rate * diurnal * weekly * burst
    if rate < 0:
        raise ValueError(f"implied arrival rate is negative at {format_minute(hour_minute)}")
    return rate


def _duration(gen: np.random.Generator, mean: float, kind: str) -> int:
    if kind == "exponential":
        draw = gen.exponential(mean)
    else:
        # lognormal with the requested mean and sd equal to the mean
        sigma2 = math.log(2.0)
        draw = gen.lognormal(math.log(mean) - sigma2 / 2.0, math.sqrt(sigma2))
    return int(round(draw))


def _esi_level(gen: np.random.Generator, weights: Sequence[float]) -> int:
    p = np.asarray(weights, dtype=np.float64)
    group = int(gen.choice(3, p=p / p.sum()))
    if group == 0:
        return int(gen.choice([1, 2]))
    if group == 1:
        return 3
    return int(gen.choice([4, 5]))


def _minute_scan_counts(
    intervals: Sequence[tuple[int, int]], start: int, n_hours: int
) -> np.ndarray:
    """Ground-truth hourly membership by scanning every minute of each stay."""
    counts = np.zeros(n_hours, dtype=np.int64)
    end = start + n_hours * MINUTES_PER_HOUR
    for a, d in intervals:
        lo, hi = max(a, start), min(d, end - 1)
        if lo > hi:
            continue
        minutes = np.arange(lo, hi + 1)
        for pos in np.unique((minutes - start) // MINUTES_PER_HOUR):
            counts[pos] += 1
    return counts


def _make_weather(config: SynthConfig) -> list[WeatherHour]:
    gen = rng.substream(config.seed, rng.DOMAIN_SYNTH_WEATHER)
    conditions = [c for c, _ in _WEATHER_SHARES]
    shares = np.asarray([s for _, s in _WEATHER_SHARES])
    shares = shares / shares.sum()
    out = []
    for hour in range(config.start, config.end, MINUTES_PER_HOUR):
        day_of_year = minute_to_date(hour).timetuple().tm_yday
        hod = (hour // MINUTES_PER_HOUR) % 24
        temp = (
            64.0
            + 15.0 * math.cos(2 * math.pi * (day_of_year - 200) / 365.0)
            + 8.0 * math.cos(2 * math.pi * (hod - 15) / 24.0)
            + gen.normal(0.0, 3.0)
        )
        wind = abs(gen.normal(2.3, 1.5))
        humidity = float(np.clip(gen.normal(73.0, 15.0), 15.0, 100.0))
        condition = conditions[int(gen.choice(len(conditions), p=shares))]
        out.append(WeatherHour(hour, round(temp, 1), round(wind, 1), round(humidity, 1), condition))
    return out


def _make_calendar(config: SynthConfig) -> CalendarTable:
    first = minute_to_date(config.start)
    last = minute_to_date(config.end - 1)
    holidays, football = set(), set()
    for year in range(first.year, last.year + 1):
        for month, day in _HOLIDAY_MONTH_DAYS:
            d = date(year, month, day)
            if first <= d <= last:
                holidays.add(d)
        # football Saturdays: the first games on or after September 1
        d = date(year, 9, 1)
        d += timedelta(days=(5 - d.weekday()) % 7)
        games = 0
        while games < FOOTBALL_GAMES_PER_YEAR and d.year == year:
            if first <= d <= last:
                football.add(d)
            games += 1
            d += timedelta(days=7)
    return CalendarTable(frozenset(holidays), frozenset(football))


def generate_world(config: SynthConfig) -> World:
    """Draw the full event log plus its ground-truth hourly ledger."""
    n_hours = (config.end - config.start) // MINUTES_PER_HOUR
    for hour in range(config.start, config.end, MINUTES_PER_HOUR):
        hourly_rate(config, hour)  # validates non-negativity up front

    visits: list[VisitInterval] = []
    boarding: list[BoardingInterval] = []
    inpatient: list[InpatientStay] = []
    waiting_iv: list[tuple[int, int]] = []
    treatment_iv: list[tuple[int, int]] = []
    boarding_iv: list[tuple[int, int]] = []

    n_days = (config.end - config.start + MINUTES_PER_DAY - 1) // MINUTES_PER_DAY
    counter = 0
    for day_index in range(n_days):
        gen = rng.substream(config.seed, rng.DOMAIN_SYNTH_DAY, day_index)
        day_start = config.start + day_index * MINUTES_PER_DAY
        day_end = min(day_start + MINUTES_PER_DAY, config.end)
        for hour in range(day_start, day_end, MINUTES_PER_HOUR):
            arrivals = int(gen.poisson(hourly_rate(config, hour)))
            offsets = np.sort(gen.integers(0, MINUTES_PER_HOUR, size=arrivals))
            for offset in offsets:
                counter += 1
                visit_id = f"V{counter:06d}"
                patient_id = f"P{counter:06d}"
                arrival = hour + int(offset)
                wait = min(
                    _duration(gen, config.mean_wait, config.service_distribution),
                    config.max_wait_minutes,
                )
                treat = _duration(gen, config.mean_treatment, config.service_distribution)
                esi = _esi_level(gen, config.esi_distribution)
                wait_end = arrival + wait
                treat_end = wait_end + treat
                visits.append(VisitInterval(visit_id, patient_id, "waiting", arrival, wait_end, esi))
                visits.append(VisitInterval(visit_id, patient_id, "treatment", wait_end, treat_end, esi))
                waiting_iv.append((arrival, wait_end))
                treatment_iv.append((wait_end, treat_end))
                if gen.random() < config.admit_probability:
                    board = _duration(gen, config.mean_boarding, config.service_distribution)
                    stay = _duration(gen, config.mean_inpatient, config.service_distribution)
                    board_end = treat_end + board
                    boarding.append(BoardingInterval(visit_id, treat_end, board_end))
                    boarding_iv.append((treat_end, board_end))
                    inpatient.append(InpatientStay(f"S{counter:06d}", board_end, board_end + stay))

    wait_counts = _minute_scan_counts(waiting_iv, config.start, n_hours)
    treat_counts = _minute_scan_counts(treatment_iv, config.start, n_hours)
    board_counts = _minute_scan_counts(boarding_iv, config.start, n_hours)
    truth = [
        (config.start + i * MINUTES_PER_HOUR, int(wait_counts[i]), int(treat_counts[i]), int(board_counts[i]))
        for i in range(n_hours)
    ]
    return World(
        visits=visits,
        boarding=boarding,
        inpatient=inpatient,
        weather=_make_weather(config),
        calendar=_make_calendar(config),
        truth=truth,
    )


def write_truth(out: TextIO, truth: Sequence[tuple[int, int, int, int]]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TRUTH_HEADER)
    for hour, wc, tc, bc in truth:
        writer.writerow((format_minute(hour), wc, tc, bc))


def read_truth(source) -> list[tuple[int, int, int, int]]:
    from .timeutil import parse_minute

    reader = csv.reader(source)
    header = next(reader, None)
    if tuple(header or ()) != TRUTH_HEADER:
        raise ValueError("unexpected truth.csv header")
    return [
        (parse_minute(r[0]), int(r[1]), int(r[2]), int(r[3])) for r in reader if r
    ]


def write_world(world: World, out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "visits": out_dir / "visits.csv",
        "boarding": out_dir / "boarding.csv",
        "inpatient": out_dir / "inpatient.csv",
        "weather": out_dir / "weather.csv",
        "calendar": out_dir / "calendar.csv",
        "truth": out_dir / "truth.csv",
    }
    with paths["visits"].open("w", newline="") as f:
        write_visits(f, world.visits)
    with paths["boarding"].open("w", newline="") as f:
        write_boarding(f, world.boarding)
    with paths["inpatient"].open("w", newline="") as f:
        write_inpatient(f, world.inpatient)
    with paths["weather"].open("w", newline="") as f:
        write_weather(f, world.weather)
    with paths["calendar"].open("w", newline="") as f:
        write_calendar(f, world.calendar)
    with paths["truth"].open("w", newline="") as f:
        write_truth(f, world.truth)
    return paths
