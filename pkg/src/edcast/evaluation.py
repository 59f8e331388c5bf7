"""Point metrics, extreme-case strata, hour-of-day breakdowns, and reports.

Strata are nested: a point with a target at or above mean + 3*sd belongs
to all three strata. Hour-of-day buckets key on the hour being predicted
(anchor + horizon), since that is when the crowding occurs.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .timeutil import MINUTES_PER_HOUR

STRATA_LABELS = ("extreme", "very_extreme", "highly_extreme")
STRATA_MULTIPLIERS = (1.0, 2.0, 3.0)

# Published best-model errors, offered as context in reports. They come from
# a private hospital dataset and are not reproducible here; they are never
# used as pass/fail gates.
REFERENCE_TARGETS = {
    "hourly_best_mae": 4.195,
    "daily_best_mae": 2.00,
    "note": "external benchmark context only; not reproducible on synthetic data",
}


@dataclass(frozen=True)
class MetricSet:
    n: int
    mae: float
    mse: float
    rmse: float
    r2: float | None  # None marks an undefined R^2 (zero target variance)

    def to_dict(self) -> dict:
        return {"n": self.n, "mae": self.mae, "mse": self.mse, "rmse": self.rmse, "r2": self.r2}


def point_metrics(y_true: Sequence[float], y_pred: Sequence[float]) -> MetricSet:
    """MAE, MSE, RMSE and R^2 about the mean of the true values."""
    yt = np.asarray(y_true, dtype=np.float64)
    yp = np.asarray(y_pred, dtype=np.float64)
    if yt.shape != yp.shape or yt.ndim != 1:
        raise ValueError("y_true and y_pred must be equal-length vectors")
    if len(yt) == 0:
        raise ValueError("cannot score an empty prediction set")
    if not (np.isfinite(yt).all() and np.isfinite(yp).all()):
        raise ValueError("metric inputs must be finite")
    err = yp - yt
    mae = float(np.abs(err).mean())
    mse = float((err**2).mean())
    sse = float((err**2).sum())
    sst = float(((yt - yt.mean()) ** 2).sum())
    if sst > 0:
        r2 = 1.0 - sse / sst
    else:
        r2 = 0.0 if sse == 0.0 else None
    return MetricSet(n=len(yt), mae=mae, mse=mse, rmse=float(np.sqrt(mse)), r2=r2)


@dataclass(frozen=True)
class StrataSpec:
    mean: float
    sd: float
    multipliers: tuple[float, ...] = STRATA_MULTIPLIERS
    labels: tuple[str, ...] = STRATA_LABELS

    def __post_init__(self) -> None:
        if self.sd < 0:
            raise ValueError("standard deviation must be non-negative")
        if len(self.multipliers) != len(self.labels):
            raise ValueError("one label per multiplier is required")

    @property
    def thresholds(self) -> tuple[float, ...]:
        return tuple(self.mean + m * self.sd for m in self.multipliers)


def extreme_strata_eval(
    y_true: Sequence[float], y_pred: Sequence[float], spec: StrataSpec
) -> dict[str, MetricSet | None]:
    """Metrics over the points whose true value reaches each threshold.

    Empty strata map to None (reported with n = 0, no metric values).
    """
    yt = np.asarray(y_true, dtype=np.float64)
    yp = np.asarray(y_pred, dtype=np.float64)
    out: dict[str, MetricSet | None] = {}
    for label, threshold in zip(spec.labels, spec.thresholds):
        mask = yt >= threshold
        out[label] = point_metrics(yt[mask], yp[mask]) if mask.any() else None
    return out


def hour_of_day_eval(
    y_true: Sequence[float],
    y_pred: Sequence[float],
    anchor_ts: Sequence[int],
    horizon_hours: int,
) -> list[MetricSet | None]:
    """24 metric sets bucketed by the predicted hour (anchor + horizon)."""
    yt = np.asarray(y_true, dtype=np.float64)
    yp = np.asarray(y_pred, dtype=np.float64)
    ts = np.asarray(anchor_ts, dtype=np.int64)
    if not (len(yt) == len(yp) == len(ts)):
        raise ValueError("one timestamp per point is required")
    target_hod = ((ts + horizon_hours * MINUTES_PER_HOUR) // MINUTES_PER_HOUR) % 24
    out: list[MetricSet | None] = []
    for hour in range(24):
        mask = target_hod == hour
        out.append(point_metrics(yt[mask], yp[mask]) if mask.any() else None)
    return out


@dataclass(frozen=True)
class EvaluationReport:
    model: dict
    variant_id: str
    horizon: int
    overall: MetricSet
    per_stratum: dict[str, MetricSet | None]
    per_hour: list[MetricSet | None]
    strata_thresholds: dict[str, float]
    reference_targets: dict | None = None

    def validate(self) -> None:
        hour_total = sum(m.n for m in self.per_hour if m is not None)
        if hour_total != self.overall.n:
            raise ValueError("hour-of-day bucket counts do not partition the test set")
        counts = [0 if m is None else m.n for m in self.per_stratum.values()]
        if any(a < b for a, b in zip(counts, counts[1:])):
            raise ValueError("extreme strata must be nested by construction")


def build_report(
    model_info: dict,
    variant_id: str,
    horizon: int,
    y_true: Sequence[float],
    y_pred: Sequence[float],
    anchor_ts: Sequence[int],
    strata: StrataSpec,
    include_reference: bool = True,
) -> EvaluationReport:
    report = EvaluationReport(
        model=model_info,
        variant_id=variant_id,
        horizon=horizon,
        overall=point_metrics(y_true, y_pred),
        per_stratum=extreme_strata_eval(y_true, y_pred, strata),
        per_hour=hour_of_day_eval(y_true, y_pred, anchor_ts, horizon),
        strata_thresholds=dict(zip(strata.labels, strata.thresholds)),
        reference_targets=dict(REFERENCE_TARGETS) if include_reference else None,
    )
    report.validate()
    return report


def _metric_entry(m: MetricSet | None) -> dict:
    return {"n": 0} if m is None else m.to_dict()


def report_to_dict(report: EvaluationReport) -> dict:
    report.validate()
    return {
        "format": "edcast-report/1",
        "model": report.model,
        "variant_id": report.variant_id,
        "horizon": report.horizon,
        "overall": report.overall.to_dict(),
        "strata_thresholds": report.strata_thresholds,
        "per_stratum": {k: _metric_entry(v) for k, v in report.per_stratum.items()},
        "per_hour": {str(h): _metric_entry(m) for h, m in enumerate(report.per_hour)},
        "reference_targets": report.reference_targets,
    }


def emit_report(report: EvaluationReport, format: str = "json") -> str:
    """Render deterministically; the same report always emits identical bytes."""
    data = report_to_dict(report)
    if format == "json":
        return json.dumps(data, indent=2, sort_keys=True) + "\n"
    if format == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(("section", "label", "n", "mae", "mse", "rmse", "r2"))

        def row(section: str, label: str, m: dict) -> None:
            writer.writerow(
                (
                    section,
                    label,
                    m.get("n", 0),
                    *(("" if m.get(k) is None else repr(m[k])) for k in ("mae", "mse", "rmse", "r2")),
                )
            )

        row("overall", "", data["overall"])
        for label in report.per_stratum:
            row("stratum", label, data["per_stratum"][label])
        for hour in range(24):
            row("hour", str(hour), data["per_hour"][str(hour)])
        return out.getvalue()
    raise ValueError(f"unknown report format {format!r}")


LEADERBOARD_HEADER = (
    "variant_id",
    "model_kind",
    "config_id",
    "val_mae",
    "test_mae",
    "test_mse",
    "test_rmse",
    "test_r2",
)


def write_leaderboard(out, rows: Sequence[dict]) -> None:
    """leaderboard.csv: one row per evaluated configuration."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(LEADERBOARD_HEADER)
    for row in rows:
        writer.writerow(
            ["" if row.get(k) is None else (repr(row[k]) if isinstance(row[k], float) else str(row[k])) for k in LEADERBOARD_HEADER]
        )
