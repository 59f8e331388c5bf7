import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edcast.featurebuild import (
    FeatureTable,
    ScalerParams,
    apply_scaler,
    contiguous_spans,
    fit_scaler,
    lag_features,
    lagged_block,
    make_supervised,
    read_feature_table,
    recategorize_weather,
    rolling_mean,
    write_feature_table,
)

HOUR = 60


@pytest.mark.parametrize(
    "ten,five",
    [
        ("Clear", "Clear"),
        ("Clouds", "Clouds"),
        ("Mist", "Clouds"),
        ("Rain", "Rain"),
        ("Drizzle", "Rain"),
        ("Thunderstorm", "Thunderstorm"),
        ("Snow", "Others"),
        ("Haze", "Others"),
        ("Fog", "Others"),
        ("Smoke", "Others"),
    ],
)
def test_recategorize_weather(ten, five):
    assert recategorize_weather(ten) == five


def test_recategorize_rejects_unknown():
    with pytest.raises(ValueError):
        recategorize_weather("Sharknado")


def test_lag_features_example():
    names, lags = lag_features([1, 2, 3, 4, 5], 2)
    assert names == ("lag_1", "lag_2")
    assert lags[4].tolist() == [4.0, 3.0]
    assert np.isnan(lags[:2]).all()


def test_lag_features_on_constant_series():
    _, lags = lag_features([7.0] * 10, 1)
    assert np.all(lags[1:] == 7.0)


def test_lag_features_window_too_long():
    with pytest.raises(ValueError):
        lag_features([1, 2, 3], 3)


@given(st.lists(st.floats(-100, 100), min_size=5, max_size=60), st.integers(1, 4))
@settings(max_examples=60)
def test_lag_correctness(values, k):
    _, lags = lag_features(values, k)
    for t in range(k, len(values)):
        for j in range(1, k + 1):
            assert lags[t, j - 1] == values[t - j]


def test_rolling_mean_examples():
    out = rolling_mean([10, 20, 30, 40], 4)
    assert out[-1] == 25.0 and np.isnan(out[:3]).all()
    assert rolling_mean([3.0, 1.0, 4.0], 1).tolist() == [3.0, 1.0, 4.0]
    with pytest.raises(ValueError):
        rolling_mean([1.0], 2)


def test_rolling_mean_covers_current_plus_previous():
    series = np.arange(10, dtype=float)
    out = rolling_mean(series, 6)
    assert out[5] == np.mean(series[0:6])
    assert out[9] == np.mean(series[4:10])


def test_lagged_block_includes_current_value():
    names, block = lagged_block("x", [1, 2, 3, 4, 5], 3)
    assert names == ("x", "x_lag_1", "x_lag_2")
    assert block[4].tolist() == [5.0, 4.0, 3.0]
    assert np.isnan(block[:2]).any(axis=1).all()
    names1, block1 = lagged_block("x", [1, 2], 1)
    assert names1 == ("x",) and block1[:, 0].tolist() == [1.0, 2.0]


def _table(columns, matrix, exempt=frozenset(), start=0):
    matrix = np.asarray(matrix, dtype=float)
    ts = start + HOUR * np.arange(len(matrix))
    return FeatureTable(tuple(columns), matrix, ts, frozenset(exempt))


def test_zscore_scaler_normalizes_fit_rows():
    table = _table(["a"], [[2.0], [4.0], [6.0]])
    params = fit_scaler(table, "zscore", [0, 1, 2])
    scaled = apply_scaler(params, table).column("a")
    assert abs(scaled.mean()) < 1e-12
    assert abs(scaled.std() - 1.0) < 1e-12


def test_minmax_scaler_example():
    table = _table(["a"], [[5.0], [10.0], [15.0]])
    params = fit_scaler(table, "minmax", [0, 1, 2])
    assert apply_scaler(params, table).column("a").tolist() == [0.0, 0.5, 1.0]


def test_constant_column_maps_to_zero():
    table = _table(["a"], [[3.0], [3.0], [3.0]])
    for method in ("zscore", "minmax"):
        params = fit_scaler(table, method, [0, 1, 2])
        assert apply_scaler(params, table).column("a").tolist() == [0.0, 0.0, 0.0]


def test_scaler_fits_on_training_rows_only():
    values = np.concatenate([np.random.default_rng(3).normal(10, 2, 50), [1000.0]])
    table = _table(["a"], values.reshape(-1, 1))
    params = fit_scaler(table, "zscore", np.arange(50))
    scaled = apply_scaler(params, table).column("a")
    refit = scaled[:50]
    assert abs(refit.mean()) < 1e-9 and abs(refit.std() - 1.0) < 1e-9
    assert scaled[-1] > 100  # the held-out outlier stays an outlier


def test_exempt_columns_bypass_scaling():
    table = _table(["a", "flag"], [[2.0, 1.0], [4.0, 0.0], [6.0, 1.0]], exempt={"flag"})
    params = fit_scaler(table, "zscore", [0, 1, 2])
    assert apply_scaler(params, table).column("flag").tolist() == [1.0, 0.0, 1.0]


def test_scaler_params_round_trip():
    table = _table(["a", "b"], np.arange(10, dtype=float).reshape(5, 2))
    params = fit_scaler(table, "minmax", [0, 1, 2])
    again = ScalerParams.from_dict(params.to_dict())
    assert again == params


def test_empty_fit_range_is_an_error():
    table = _table(["a"], [[1.0], [2.0]])
    with pytest.raises(ValueError):
        fit_scaler(table, "zscore", [])


def _target_table(n, window, start=0):
    series = np.arange(n, dtype=float)
    names, block = lagged_block("y", series, window)
    ts = start + HOUR * np.arange(n)
    complete = ~np.isnan(block).any(axis=1)
    return FeatureTable(names, block[complete], ts[complete], frozenset())


def test_supervised_frame_size_law():
    # 100 source rows, 24-wide window, horizon 6 -> 71 supervised rows
    table = _target_table(100, 24)
    frame = make_supervised(table, "y", 6)
    assert frame.n_rows == 100 - 24 - 6 + 1


def test_supervised_identity_lag_pairs():
    table = _target_table(3, 1)
    frame = make_supervised(table, "y", 1)
    assert frame.X.column("y").tolist() == [0.0, 1.0]
    assert frame.y.tolist() == [1.0, 2.0]


def test_supervised_never_bridges_gaps():
    series = np.arange(30, dtype=float)
    ts = HOUR * np.arange(30)
    # remove hours 12..17: anchors 6..11 would need targets inside the hole
    keep = np.concatenate([np.arange(0, 12), np.arange(18, 30)])
    table = FeatureTable(("y",), series[keep].reshape(-1, 1), ts[keep], frozenset())
    frame = make_supervised(table, "y", 6)
    assert all(b - a == 6 * HOUR for a, b in zip(frame.anchor_ts, frame.target_ts))
    spans = contiguous_spans(table.timestamps, HOUR)
    assert spans.max() == 1
    assert frame.n_rows == (12 - 6) + (12 - 6)


def test_supervised_requires_target_column():
    table = _target_table(10, 1)
    with pytest.raises(ValueError):
        make_supervised(table, "nope", 1)
    with pytest.raises(ValueError):
        make_supervised(table, "y", 0)


@given(
    n=st.integers(min_value=40, max_value=140),
    window=st.integers(min_value=1, max_value=12),
    h=st.integers(min_value=1, max_value=8),
)
@settings(max_examples=40)
def test_supervised_alignment(n, window, h):
    table = _target_table(n, window)
    frame = make_supervised(table, "y", h)
    assert frame.n_rows == n - window - h + 1
    assert np.all(frame.target_ts - frame.anchor_ts == h * HOUR)
    # the target is the raw series value at the target time
    assert np.all(frame.y == frame.target_ts / HOUR)


def test_feature_table_round_trip():
    table = _table(["a", "b"], [[1.5, 2.0], [3.25, 4.0]], exempt={"b"})
    import io

    out = io.StringIO()
    write_feature_table(out, table)
    again = read_feature_table(out.getvalue())
    assert again.columns == table.columns
    assert np.array_equal(again.values, table.values)
    assert np.array_equal(again.timestamps, table.timestamps)
    assert again.scale_exempt == table.scale_exempt
