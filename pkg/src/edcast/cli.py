"""Command-line front end: synth, ingest, featurize, train, evaluate, forecast.

Every artifact-producing command writes a run manifest (inputs and outputs
with SHA-256 digests, seed, configuration) next to its outputs. Output
files are written atomically (temp file, then rename) and are byte-stable:
re-running a command with identical inputs reproduces identical artifacts.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, rng
from .evaluation import (
    StrataSpec,
    build_report,
    emit_report,
    point_metrics,
    write_leaderboard,
)
from .featurebuild import (
    make_supervised,
    read_feature_table,
    write_feature_table,
)
from .flowmetrics import (
    assemble_hourly_records,
    compute_series_bundle,
    read_integrated,
    write_integrated,
)
from .forecast import (
    ForestConfig,
    GridEntry,
    GridSpec,
    chrono_split,
    dumps_model,
    grid_search,
    loads_model,
    predict,
    train_model,
)
from .ingestion import (
    DataError,
    SchemaError,
    build_hour_index,
    clean_visits,
    parse_boarding_events,
    parse_calendar,
    parse_inpatient_stays,
    parse_visit_events,
    parse_weather,
)
from .synthgen import BurstSpec, SynthConfig, generate_world, write_world
from .timeutil import (
    MINUTES_PER_DAY,
    MINUTES_PER_HOUR,
    date_to_minute,
    format_minute,
    parse_date,
    parse_minute,
)
from .variants import (
    DEFAULT_DAILY_ANCHOR_HOUR,
    DEFAULT_DAILY_WINDOW,
    VariantError,
    assemble_daily_variant,
    assemble_variant,
    daily_aggregate,
    variant_ids,
    variant_spec,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

TARGET_COLUMN = "waiting_count"
DEFAULT_HOURLY_HORIZON = 6
DEFAULT_DAILY_HORIZON = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit(2); usage errors are 1
        raise UsageError(message)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_manifest(
    out_dir: Path,
    command: str,
    settings: dict,
    inputs: dict[str, Path],
    outputs: dict[str, Path],
    started: float,
) -> Path:
    manifest = {
        "tool": "edcast",
        "version": __version__,
        "command": command,
        "settings": settings,
        "inputs": {name: _sha256(p) for name, p in sorted(inputs.items())},
        "outputs": {name: _sha256(p) for name, p in sorted(outputs.items())},
        "wall_clock_seconds": round(time.time() - started, 3),
    }
    path = out_dir / f"manifest_{command}.json"
    _write_atomic(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _render(write, *args) -> str:
    buffer = io.StringIO()
    write(buffer, *args)
    return buffer.getvalue()


# --- subcommands


def _cmd_synth(args) -> int:
    started = time.time()
    start = date_to_minute(parse_date(args.start))
    config = SynthConfig(
        start=start,
        end=start + args.days * MINUTES_PER_DAY,
        base_arrival_rate=args.rate,
        diurnal_amplitude=args.diurnal,
        diurnal_peak_hour=args.peak_hour,
        weekly_amplitude=args.weekly,
        mean_wait=args.mean_wait,
        mean_treatment=args.mean_treatment,
        admit_probability=args.admit_prob,
        mean_boarding=args.mean_boarding,
        extreme_burst=(
            BurstSpec(tuple(args.burst_dates.split(",")), args.burst_multiplier)
            if args.burst_dates
            else None
        ),
        seed=args.seed,
    )
    out_dir = Path(args.out)
    paths = write_world(generate_world(config), out_dir)
    _write_manifest(
        out_dir,
        "synth",
        {"seed": args.seed, "start": args.start, "days": args.days, "rate": args.rate,
         "generator": rng.describe(args.seed)},
        {},
        {name: p for name, p in paths.items()},
        started,
    )
    print(f"wrote {len(paths)} files to {out_dir}")
    return EXIT_OK


def _parse_exclusion(text: str) -> list[tuple[int, int]]:
    if text == "none":
        return []
    try:
        lo, hi = text.split(":")
        return [(date_to_minute(parse_date(lo)), date_to_minute(parse_date(hi)))]
    except ValueError as exc:
        raise UsageError(f"bad exclusion range {text!r}: {exc}") from None


def _cmd_ingest(args) -> int:
    started = time.time()
    in_dir = Path(args.in_dir)
    inputs = {
        name: in_dir / f"{name}.csv"
        for name in ("visits", "boarding", "inpatient", "weather", "calendar")
    }
    for name, path in inputs.items():
        if not path.exists():
            raise DataError(f"missing input file {path}")

    with inputs["visits"].open() as f:
        visits, visit_errors = parse_visit_events(f)
    with inputs["boarding"].open() as f:
        boarding, boarding_errors = parse_boarding_events(f)
    with inputs["inpatient"].open() as f:
        stays, stay_errors = parse_inpatient_stays(f)
    with inputs["weather"].open() as f:
        weather, weather_errors = parse_weather(f)
    with inputs["calendar"].open() as f:
        calendar, calendar_errors = parse_calendar(f)
    n_row_errors = sum(
        map(len, (visit_errors, boarding_errors, stay_errors, weather_errors, calendar_errors))
    )
    if n_row_errors:
        print(f"skipped {n_row_errors} malformed rows", file=sys.stderr)
    if not weather:
        raise DataError("weather table is empty; it defines the hour index span")

    span_start = min(w.hour for w in weather)
    span_end = max(w.hour for w in weather) + MINUTES_PER_HOUR
    exclusions = [
        (max(lo, span_start), min(hi, span_end))
        for lo, hi in _parse_exclusion(args.covid_exclusion)
        if lo < span_end and hi > span_start
    ]
    index = build_hour_index(span_start, span_end, exclusions)

    kept, dropped = clean_visits(visits, args.max_wait)
    waiting = [v for v in kept if v.location == "waiting"]
    treatment = [v for v in kept if v.location == "treatment"]
    bundle = compute_series_bundle(waiting, treatment, boarding, stays, index)
    records = assemble_hourly_records(bundle, weather, calendar, index)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "integrated.csv"
    _write_atomic(out_path, _render(write_integrated, records))
    _write_manifest(
        out_dir,
        "ingest",
        {
            "covid_exclusion": args.covid_exclusion,
            "max_wait": args.max_wait,
            "rows": len(records),
            "dropped_long_waits": dropped,
            "row_errors": n_row_errors,
        },
        inputs,
        {"integrated": out_path},
        started,
    )
    print(f"integrated {len(records)} hours -> {out_path} (dropped {dropped} long waits)")
    return EXIT_OK


def _features_filename(variant: str, task: str) -> str:
    return f"features_{variant}_{task}.csv"


def _cmd_featurize(args) -> int:
    started = time.time()
    spec = variant_spec(args.variant)
    in_path = Path(args.in_dir) / "integrated.csv"
    if not in_path.exists():
        raise DataError(f"missing input file {in_path}")
    with in_path.open() as f:
        records = read_integrated(f)
    if args.task == "hourly":
        table = assemble_variant(records, spec)
    else:
        daily = daily_aggregate(records, anchor_hour=args.anchor)
        table = assemble_daily_variant(daily, spec, window_days=args.window_days)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / _features_filename(args.variant, args.task)
    _write_atomic(out_path, _render(write_feature_table, table))
    _write_manifest(
        out_dir,
        "featurize",
        {"variant": args.variant, "task": args.task, "anchor": args.anchor,
         "window_days": args.window_days, "rows": table.n_rows, "columns": len(table.columns)},
        {"integrated": in_path},
        {"features": out_path},
        started,
    )
    print(f"assembled {args.variant}/{args.task}: {table.n_rows} rows x {len(table.columns)} columns")
    return EXIT_OK


def _default_horizon(args) -> int:
    if args.horizon is not None:
        return args.horizon
    return DEFAULT_HOURLY_HORIZON if args.task == "hourly" else DEFAULT_DAILY_HORIZON


def _load_frame(args):
    features_path = Path(args.features)
    if not features_path.exists():
        raise DataError(f"missing features file {features_path}")
    with features_path.open() as f:
        table = read_feature_table(f)
    step = MINUTES_PER_HOUR if args.task == "hourly" else MINUTES_PER_DAY
    frame = make_supervised(table, TARGET_COLUMN, _default_horizon(args), step_minutes=step)
    return features_path, frame


def _model_params_from_flags(args) -> dict:
    if args.model == "ridge":
        return {"lam": args.lam, "scaler": variant_spec(args.variant).scaling}
    if args.model == "seasonal_naive":
        return {"period": args.period}
    if args.model == "forest":
        return {
            "n_trees": args.trees,
            "max_depth": args.depth,
            "min_samples_leaf": args.min_leaf,
            "bootstrap": not args.no_bootstrap,
            "max_features": args.max_features,
        }
    return {}


def _cmd_train(args) -> int:
    started = time.time()
    features_path, frame = _load_frame(args)
    split = chrono_split(frame)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs: dict[str, Path] = {}

    if args.grid:
        grid_path = Path(args.grid)
        if not grid_path.exists():
            raise DataError(f"missing grid file {grid_path}")
        entries = [
            GridEntry(e["config_id"], e["kind"], e.get("params", {}))
            for e in json.loads(grid_path.read_text())
        ]
        best, model, leaderboard = grid_search(split, GridSpec(tuple(entries)), seed=args.seed)
        rows = [
            {
                "variant_id": args.variant,
                "model_kind": r["kind"],
                "config_id": r["config_id"],
                "val_mae": r.get("val_mae"),
            }
            for r in leaderboard
        ]
        board_path = out_dir / "leaderboard.csv"
        _write_atomic(board_path, _render(write_leaderboard, rows))
        outputs["leaderboard"] = board_path
        config_id = best.config_id
        print(f"grid search: best {best.config_id} ({best.kind})")
    else:
        model = train_model(split.train, args.model, _model_params_from_flags(args), seed=args.seed)
        config_id = args.model

    model = type(model)(
        **{
            **model.__dict__,
            "provenance": {**model.provenance, "config_id": config_id, "variant_id": args.variant,
                           "task": args.task},
        }
    )
    model_path = out_dir / "model.json"
    _write_atomic(model_path, dumps_model(model))
    outputs["model"] = model_path
    _write_manifest(
        out_dir,
        "train",
        {"variant": args.variant, "task": args.task, "horizon": _default_horizon(args),
         "model": config_id, "seed": args.seed, "generator": rng.describe(args.seed)},
        {"features": features_path},
        outputs,
        started,
    )
    print(f"trained {model.kind} on {split.train.n_rows} rows -> {model_path}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    started = time.time()
    model_path = Path(args.model)
    if not model_path.exists():
        raise DataError(f"missing model file {model_path}")
    model = loads_model(model_path.read_text())
    if args.horizon is None:
        args.horizon = model.horizon
    features_path, frame = _load_frame(args)
    split = chrono_split(frame)

    if (args.strata_mean is None) != (args.strata_sd is None):
        raise UsageError("--strata-mean and --strata-sd must be given together")
    if args.strata_mean is not None:
        strata = StrataSpec(args.strata_mean, args.strata_sd)
    else:
        strata = StrataSpec(float(split.train.y.mean()), float(split.train.y.std()))

    test_pred = predict(model, split.test.X)
    val_pred = predict(model, split.validation.X)
    report = build_report(
        model_info={
            "kind": model.kind,
            "config_id": model.provenance.get("config_id", model.kind),
            "variant_id": model.provenance.get("variant_id", args.variant),
        },
        variant_id=args.variant,
        horizon=frame.horizon,
        y_true=split.test.y,
        y_pred=test_pred,
        anchor_ts=split.test.anchor_ts,
        strata=strata,
        include_reference=not args.no_reference,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / ("report.json" if args.format == "json" else "report.csv")
    _write_atomic(report_path, emit_report(report, args.format))

    test_metrics = point_metrics(split.test.y, test_pred)
    val_metrics = point_metrics(split.validation.y, val_pred)
    board_path = out_dir / "leaderboard.csv"
    _write_atomic(
        board_path,
        _render(
            write_leaderboard,
            [
                {
                    "variant_id": args.variant,
                    "model_kind": model.kind,
                    "config_id": model.provenance.get("config_id", model.kind),
                    "val_mae": val_metrics.mae,
                    "test_mae": test_metrics.mae,
                    "test_mse": test_metrics.mse,
                    "test_rmse": test_metrics.rmse,
                    "test_r2": test_metrics.r2,
                }
            ],
        ),
    )
    _write_manifest(
        out_dir,
        "evaluate",
        {"variant": args.variant, "task": args.task, "horizon": frame.horizon,
         "format": args.format,
         "strata": {"mean": strata.mean, "sd": strata.sd}},
        {"features": features_path, "model": model_path},
        {"report": report_path, "leaderboard": board_path},
        started,
    )
    print(f"test MAE {test_metrics.mae:.3f}, RMSE {test_metrics.rmse:.3f} -> {report_path}")
    return EXIT_OK


def _cmd_forecast(args) -> int:
    started = time.time()
    model_path = Path(args.model)
    if not model_path.exists():
        raise DataError(f"missing model file {model_path}")
    model = loads_model(model_path.read_text())
    features_path = Path(args.features)
    if not features_path.exists():
        raise DataError(f"missing features file {features_path}")
    with features_path.open() as f:
        table = read_feature_table(f)

    at = parse_minute(args.at)
    positions = np.nonzero(table.timestamps == at)[0]
    if len(positions) == 0:
        raise DataError(f"no feature row at {args.at}; cannot anchor a forecast there")
    row = table.take_rows(positions)
    value = float(predict(model, row)[0])

    step = MINUTES_PER_HOUR if args.task == "hourly" else MINUTES_PER_DAY
    target_time = at + model.horizon * step
    result = {
        "anchor_time": format_minute(at),
        "target_time": format_minute(target_time),
        "horizon": model.horizon,
        "task": args.task,
        "prediction": value,
    }
    if args.task == "daily":
        result["target_window"] = [format_minute(at), format_minute(target_time)]
        result["note"] = "prediction is the mean waiting count over the target window"
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    print(text, end="")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        out_path = out_dir / "forecast.json"
        _write_atomic(out_path, text)
        _write_manifest(
            out_dir,
            "forecast",
            {"at": args.at, "task": args.task},
            {"features": features_path, "model": model_path},
            {"forecast": out_path},
            started,
        )
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="edcast", description="ED waiting-count forecasting pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic event world")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", default="2019-01-01")
    p.add_argument("--days", type=int, default=90)
    p.add_argument("--rate", type=float, default=12.0)
    p.add_argument("--diurnal", type=float, default=0.5)
    p.add_argument("--peak-hour", type=int, default=19)
    p.add_argument("--weekly", type=float, default=0.15)
    p.add_argument("--mean-wait", type=float, default=90.0)
    p.add_argument("--mean-treatment", type=float, default=180.0)
    p.add_argument("--admit-prob", type=float, default=0.30)
    p.add_argument("--mean-boarding", type=float, default=55.0)
    p.add_argument("--burst-dates", default="")
    p.add_argument("--burst-multiplier", type=float, default=2.0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest", help="parse, clean, and integrate event tables")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--covid-exclusion", default="2020-01-01:2021-05-01")
    p.add_argument("--max-wait", type=int, default=540)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("featurize", help="assemble one dataset variant")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", required=True, choices=list(variant_ids()))
    p.add_argument("--task", choices=("hourly", "daily"), default="hourly")
    p.add_argument("--anchor", type=int, default=DEFAULT_DAILY_ANCHOR_HOUR)
    p.add_argument("--window-days", type=int, default=DEFAULT_DAILY_WINDOW)
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("train", help="fit a model or run a grid search")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", required=True, choices=list(variant_ids()))
    p.add_argument("--task", choices=("hourly", "daily"), default="hourly")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--model", choices=("naive", "seasonal_naive", "ridge", "forest"), default="ridge")
    p.add_argument("--grid", default=None, help="JSON grid file; overrides --model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--period", type=int, default=24)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--depth", type=int, default=30)
    p.add_argument("--min-leaf", type=int, default=4)
    p.add_argument("--no-bootstrap", action="store_true")
    p.add_argument("--max-features", type=float, default=1.0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="score a model on the chronological test split")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", required=True, choices=list(variant_ids()))
    p.add_argument("--task", choices=("hourly", "daily"), default="hourly")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--strata-mean", type=float, default=None)
    p.add_argument("--strata-sd", type=float, default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--no-reference", action="store_true")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("forecast", help="emit one prediction anchored at a timestamp")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--at", required=True, help="anchor timestamp YYYY-MM-DDTHH:MM")
    p.add_argument("--task", choices=("hourly", "daily"), default="hourly")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_forecast)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VariantError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SchemaError, ValueError, RuntimeError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entrypoint() -> None:
    raise SystemExit(main())
