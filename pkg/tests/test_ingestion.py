import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edcast.ingestion import (
    DataError,
    SchemaError,
    VisitInterval,
    build_hour_index,
    clean_visits,
    parse_boarding_events,
    parse_calendar,
    parse_visit_events,
    parse_weather,
    write_visits,
)
from edcast.timeutil import parse_minute

VISITS_HEADER = "visit_id,patient_id,location,arrival,departure,esi\n"


def test_empty_file_yields_empty_sequence():
    visits, errors = parse_visit_events(VISITS_HEADER)
    assert visits == [] and errors == []


def test_canonical_visit_row():
    visits, errors = parse_visit_events(
        VISITS_HEADER + "V1,P1,waiting,2019-01-05T10:10,2019-01-05T11:15,3\n"
    )
    assert errors == []
    (v,) = visits
    assert v.location == "waiting"
    assert v.arrival == parse_minute("2019-01-05T10:10")
    assert v.departure == parse_minute("2019-01-05T11:15")
    assert v.esi == 3


def test_location_is_case_insensitive_and_esi_may_be_empty():
    visits, errors = parse_visit_events(
        VISITS_HEADER
        + "V1,P1,Waiting,2019-01-05T10:10,2019-01-05T11:15,\n"
        + "V2,P2,TREATMENT,2019-01-05T10:00,2019-01-05T12:00,5\n"
    )
    assert errors == []
    assert visits[0].location == "waiting" and visits[0].esi is None
    assert visits[1].location == "treatment" and visits[1].esi == 5


@pytest.mark.parametrize(
    "row",
    [
        "V1,P1,waiting,2019-01-05T11:15,2019-01-05T10:10,3",  # departure < arrival
        "V1,P1,waiting,2019-01-05T10:10,2019-01-05T11:15,9",  # esi outside 1-5
        "V1,P1,lobby,2019-01-05T10:10,2019-01-05T11:15,3",  # unknown location
        "V1,P1,waiting,someday,2019-01-05T11:15,3",  # bad timestamp
    ],
)
def test_bad_rows_are_reported_not_emitted(row):
    visits, errors = parse_visit_events(VISITS_HEADER + row + "\n")
    assert visits == []
    assert len(errors) == 1 and errors[0].line == 2


def test_row_errors_never_abort_the_stream():
    good = "V{0},P{0},waiting,2019-01-05T10:10,2019-01-05T11:15,3"
    bad = "V{0},P{0},waiting,2019-01-05T11:15,2019-01-05T10:10,3"
    body = "\n".join(
        good.format(i) if i % 3 else bad.format(i) for i in range(1, 31)
    )
    visits, errors = parse_visit_events(VISITS_HEADER + body + "\n")
    assert len(visits) == 20
    assert len(errors) == 10


def test_missing_column_is_a_schema_error():
    with pytest.raises(SchemaError):
        parse_visit_events("visit_id,patient_id,location,arrival,departure\n")


visit_strategy = st.builds(
    VisitInterval,
    visit_id=st.text(st.characters(categories=["L", "N"]), min_size=1, max_size=8),
    patient_id=st.text(st.characters(categories=["L", "N"]), min_size=1, max_size=8),
    location=st.sampled_from(["waiting", "treatment"]),
    arrival=st.integers(min_value=25_000_000, max_value=26_000_000),
    departure=st.integers(min_value=0, max_value=600),
    esi=st.one_of(st.none(), st.integers(min_value=1, max_value=5)),
).map(lambda v: VisitInterval(v.visit_id, v.patient_id, v.location, v.arrival, v.arrival + v.departure, v.esi))


@given(st.lists(visit_strategy, max_size=30))
@settings(max_examples=50)
def test_visits_round_trip(visits):
    out = io.StringIO()
    write_visits(out, visits)
    parsed, errors = parse_visit_events(out.getvalue())
    assert errors == []
    assert parsed == visits


def test_weather_and_boarding_parsers():
    weather, errors = parse_weather(
        "hour,temp_f,wind_mps,humidity_pct,condition\n"
        "2019-01-05T10:00,41.0,2.5,88.0,Mist\n"
    )
    assert errors == [] and weather[0].condition == "Mist"

    boarding, errors = parse_boarding_events("visit_id,bed_request,ed_checkout\n")
    assert boarding == [] and errors == []


def test_calendar_holiday_count():
    dates = [f"2019-{m:02d}-{d:02d}" for m in range(1, 13) for d in (3, 12, 21)][:34]
    body = "".join(f"{d},holiday\n" for d in dates)
    table, errors = parse_calendar("date,kind\n" + body + "2019-09-07,football\n")
    assert errors == []
    assert len(table.holidays) == 34
    assert len(table.football_games) == 1


def _visit(minutes, location="waiting"):
    return VisitInterval("V1", "P1", location, 0, minutes, 3)


def test_clean_visits_boundary():
    kept, dropped = clean_visits([_visit(541)])
    assert kept == [] and dropped == 1
    kept, dropped = clean_visits([_visit(540)])
    assert len(kept) == 1 and dropped == 0
    kept, dropped = clean_visits([_visit(700, "treatment")])
    assert len(kept) == 1 and dropped == 0


@given(st.lists(visit_strategy, max_size=40))
def test_clean_visits_is_idempotent(visits):
    once, _ = clean_visits(visits)
    twice, dropped = clean_visits(once)
    assert twice == once and dropped == 0


DAY = 1440


def test_hour_index_basic():
    start = parse_minute("2019-01-01T00:00")
    index = build_hour_index(start, start + DAY, [])
    assert index.effective_hours == 24
    assert list(index.hours())[0] == start


def test_hour_index_requires_order():
    start = parse_minute("2019-01-01T00:00")
    with pytest.raises(DataError):
        build_hour_index(start, start, [])
    with pytest.raises(DataError):
        build_hour_index(start + DAY, start, [])


def test_hour_index_exclusion_rules():
    start = parse_minute("2019-01-01T00:00")
    end = parse_minute("2023-07-01T00:00")
    lo = parse_minute("2020-01-01T00:00")
    hi = parse_minute("2021-05-01T00:00")
    index = build_hour_index(start, end, [(lo, hi)])
    mid_gap = parse_minute("2020-06-15T00:00")
    hours = set(index.hours())
    assert all(mid_gap + h * 60 not in hours for h in range(24))
    assert lo - 60 in hours and hi in hours

    with pytest.raises(DataError):
        build_hour_index(start, end, [(lo, hi), (lo + 60, hi + 60)])  # overlap
    with pytest.raises(DataError):
        build_hour_index(start, end, [(end, end + 60)])  # outside span


@given(
    start_hour=st.integers(min_value=0, max_value=10_000),
    length=st.integers(min_value=2, max_value=400),
    data=st.data(),
)
@settings(max_examples=60)
def test_hour_index_counts(start_hour, length, data):
    start = start_hour * 60
    end = start + length * 60
    a = data.draw(st.integers(min_value=0, max_value=length - 1))
    b = data.draw(st.integers(min_value=a + 1, max_value=length))
    exclusions = [] if b - a == length else [(start + a * 60, start + b * 60)]
    index = build_hour_index(start, end, exclusions)
    excluded = (b - a) if exclusions else 0
    assert len(list(index.hours())) == length - excluded
    assert index.effective_hours == length - excluded
