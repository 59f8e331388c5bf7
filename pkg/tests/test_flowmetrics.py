import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edcast.flowmetrics import (
    ECIParams,
    SeriesBundle,
    assemble_hourly_records,
    avg_dwell_time,
    compute_series_bundle,
    eci_fit,
    extreme_case_indicator,
    interval_census,
    read_integrated,
    stratified_census,
    write_integrated,
)
from edcast.ingestion import (
    BoardingInterval,
    CalendarTable,
    DataError,
    InpatientStay,
    VisitInterval,
    WeatherHour,
    build_hour_index,
)
from edcast.timeutil import minute_to_date, parse_date, parse_minute


def hour_index(start_text, hours, exclusions=()):
    start = parse_minute(start_text)
    return build_hour_index(start, start + hours * 60, exclusions)


def minute_scan_oracle(intervals, index):
    """Count intervals holding any minute of each hour, the slow honest way."""
    counts = []
    for hour in index.hours():
        members = 0
        for a, d in intervals:
            if any(a <= m <= d for m in range(hour, hour + 60)):
                members += 1
        counts.append(members)
    return counts


def test_interval_counted_in_both_touched_hours():
    index = hour_index("2019-01-05T00:00", 24)
    a = parse_minute("2019-01-05T10:10")
    d = parse_minute("2019-01-05T11:15")
    series = interval_census([(a, d)], index)
    assert series.values[10] == 1 and series.values[11] == 1
    assert series.values.sum() == 2


def test_empty_interval_list_is_all_zero():
    index = hour_index("2019-01-05T00:00", 24)
    assert interval_census([], index).values.sum() == 0


def test_interval_ending_on_the_hour_counts_in_that_hour():
    index = hour_index("2019-01-05T00:00", 24)
    a = parse_minute("2019-01-05T11:20")
    d = parse_minute("2019-01-05T12:00")
    series = interval_census([(a, d)], index)
    assert series.values[12] == 1


def test_reversed_interval_is_an_error():
    index = hour_index("2019-01-05T00:00", 24)
    with pytest.raises(DataError):
        interval_census([(120, 60)], index)


interval_strategy = st.tuples(
    st.integers(min_value=0, max_value=72 * 60),
    st.integers(min_value=0, max_value=16 * 60),
).map(lambda t: (t[0], t[0] + t[1]))


@given(st.lists(interval_strategy, max_size=60))
@settings(max_examples=60, deadline=None)
def test_census_matches_minute_scan_oracle(intervals):
    index = hour_index("1970-01-02T00:00", 48)
    fast = interval_census(intervals, index).values
    slow = minute_scan_oracle(intervals, index)
    assert fast.tolist() == slow


@given(st.lists(interval_strategy, min_size=1, max_size=40), interval_strategy)
@settings(max_examples=40, deadline=None)
def test_census_monotone_under_insertion(intervals, extra):
    index = hour_index("1970-01-02T00:00", 48)
    before = interval_census(intervals, index).values
    after = interval_census(intervals + [extra], index).values
    assert np.all(after >= before)


def _visit(a_text, d_text, esi):
    return VisitInterval("V", "P", "waiting", parse_minute(a_text), parse_minute(d_text), esi)


def test_stratified_census_partitions():
    index = hour_index("2019-01-05T00:00", 24)
    visits = [
        _visit("2019-01-05T10:00", "2019-01-05T10:30", 1),
        _visit("2019-01-05T10:05", "2019-01-05T10:40", 4),
        _visit("2019-01-05T10:10", "2019-01-05T10:50", None),
    ]
    total, esi12, esi3, esi45 = stratified_census(visits, index)
    assert total.values[10] == 3
    assert esi12.values[10] == 1 and esi3.values[10] == 0 and esi45.values[10] == 1


@given(
    st.lists(
        st.tuples(interval_strategy, st.one_of(st.none(), st.integers(1, 5))),
        max_size=50,
    )
)
@settings(max_examples=40, deadline=None)
def test_strata_plus_unlabeled_equals_total(tagged):
    index = hour_index("1970-01-02T00:00", 48)
    visits = [VisitInterval("V", "P", "waiting", a, d, esi) for (a, d), esi in tagged]
    total, esi12, esi3, esi45 = stratified_census(visits, index)
    unlabeled = interval_census(
        ((v.arrival, v.departure) for v in visits if v.esi is None), index
    )
    assert np.array_equal(
        total.values, esi12.values + esi3.values + esi45.values + unlabeled.values
    )


def test_dwell_time_clips_to_hour_end():
    index = hour_index("2019-01-05T00:00", 24)
    a = parse_minute("2019-01-05T09:00")
    d = parse_minute("2019-01-05T10:30")
    series = avg_dwell_time([(a, d)], index)
    assert series.values[9] == 60.0
    assert series.values[10] == 90.0
    assert series.values[8] == 0.0  # no members


def test_dwell_time_is_the_member_mean():
    index = hour_index("2019-01-05T00:00", 24)
    h = parse_minute("2019-01-05T10:00")
    series = avg_dwell_time([(h + 30, h + 90), (h, h + 120)], index)
    # members contribute 30 and 60 elapsed minutes by the end of hour 10
    assert series.values[10] == 45.0


@given(st.lists(interval_strategy, max_size=40))
@settings(max_examples=40, deadline=None)
def test_dwell_time_bounds(intervals):
    index = hour_index("1970-01-02T00:00", 48)
    series = avg_dwell_time(intervals, index)
    assert np.all(series.values >= 0)
    if intervals:
        longest = max(d - a for a, d in intervals)
        assert np.all(series.values <= max(longest, 60))


def test_eci_fit_examples():
    assert eci_fit([5.0, 5.0, 5.0]) == ECIParams(5.0, 0.0)
    params = eci_fit([0.0, 10.0])
    assert params.mean == 5.0 and params.sd == 5.0  # population form
    with pytest.raises(DataError):
        eci_fit([])


def test_reported_threshold_shape():
    params = ECIParams(18.11, 9.77)
    assert params.threshold == pytest.approx(37.65, abs=0.005)


def test_extreme_case_indicator_boundaries():
    index = hour_index("2019-01-05T00:00", 3)
    params = ECIParams(18.11, 9.77)
    series = interval_census([], index)
    flags = extreme_case_indicator(
        type(series)(index, np.array([38.0, 37.0, 10.0])), params
    )
    assert flags.values.tolist() == [1, 0, 0]

    at_mean = extreme_case_indicator(
        type(series)(index, np.array([7.0, 6.9, 0.0])), ECIParams(7.0, 0.0)
    )
    assert at_mean.values.tolist() == [1, 0, 0]  # >= holds at equality


@given(st.lists(st.floats(0, 100), min_size=2, max_size=50))
def test_eci_monotone(values):
    params = ECIParams(30.0, 10.0)
    flags = [int(v >= params.threshold) for v in values]
    order = np.argsort(values)
    assert all(
        flags[order[i]] <= flags[order[i + 1]] for i in range(len(order) - 1)
    )


def _tiny_world(index):
    visits = [
        VisitInterval("V1", "P1", "waiting", index.start + 10, index.start + 100, 2),
        VisitInterval("V1", "P1", "treatment", index.start + 100, index.start + 400, 2),
    ]
    boarding = [BoardingInterval("V1", index.start + 400, index.start + 460)]
    stays = [InpatientStay("S1", index.start + 460, index.start + 2000)]
    return visits[:1], visits[1:], boarding, stays


def _constant_weather(index, skip=()):
    return [
        WeatherHour(h, 60.0, 2.0, 70.0, "Mist")
        for i, h in enumerate(index.hours())
        if i not in skip
    ]


def test_assemble_hourly_records_fields():
    index = hour_index("2019-01-07T00:00", 48)  # a Monday
    waiting, treatment, boarding, stays = _tiny_world(index)
    bundle = compute_series_bundle(waiting, treatment, boarding, stays, index)
    calendar = CalendarTable(
        holidays=frozenset([parse_date("2019-01-08")]), football_games=frozenset()
    )
    records = assemble_hourly_records(bundle, _constant_weather(index), calendar, index)
    assert len(records) == index.effective_hours
    first = records[0]
    assert first.day_of_week == 0 and first.hour_of_day == 0
    assert first.condition10 == "Mist" and first.condition5 == "Clouds"
    # the holiday flag covers all 24 hours of the flagged date
    holiday_rows = [r for r in records if minute_to_date(r.hour) == parse_date("2019-01-08")]
    assert len(holiday_rows) == 24
    assert all(r.is_holiday == 1 for r in holiday_rows)
    assert all(r.is_holiday == 0 for r in records if r not in holiday_rows)


def test_assemble_skips_excluded_hours():
    start = parse_minute("2019-12-31T00:00")
    lo = parse_minute("2020-01-01T00:00")
    index = build_hour_index(start, lo + 1440, [(lo, lo + 1440)])
    waiting, treatment, boarding, stays = _tiny_world(index)
    bundle = compute_series_bundle(waiting, treatment, boarding, stays, index)
    records = assemble_hourly_records(
        bundle, _constant_weather(index), CalendarTable(frozenset(), frozenset()), index
    )
    assert len(records) == 24
    assert all(not index.is_excluded(r.hour) for r in records)


def test_weather_forward_fill_limit():
    index = hour_index("2019-01-07T00:00", 24)
    waiting, treatment, boarding, stays = _tiny_world(index)
    bundle = compute_series_bundle(waiting, treatment, boarding, stays, index)
    calendar = CalendarTable(frozenset(), frozenset())
    # a 6-hour hole forward-fills
    records = assemble_hourly_records(
        bundle, _constant_weather(index, skip=range(3, 9)), calendar, index
    )
    assert records[4].condition10 == "Mist"
    # a 7-hour hole is an error
    with pytest.raises(DataError):
        assemble_hourly_records(
            bundle, _constant_weather(index, skip=range(3, 10)), calendar, index
        )


def test_integrated_round_trip():
    index = hour_index("2019-01-07T00:00", 24)
    waiting, treatment, boarding, stays = _tiny_world(index)
    bundle = compute_series_bundle(waiting, treatment, boarding, stays, index)
    records = assemble_hourly_records(
        bundle, _constant_weather(index), CalendarTable(frozenset(), frozenset()), index
    )
    out = io.StringIO()
    write_integrated(out, records)
    assert read_integrated(out.getvalue()) == records
