"""Regressors over supervised frames: baselines, ridge, random forest.

All models are deterministic. Stochastic choices in the forest (bootstrap
draws, per-node feature subsets) come from per-tree Philox substreams, so
trees can be grown in any order, serially or in parallel, with identical
results. Models serialize to self-describing JSON and reload to bitwise
identical predictions.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence, TextIO

import numpy as np

from . import rng
from .featurebuild import (
    FeatureTable,
    ScalerParams,
    SupervisedFrame,
    apply_scaler,
    fit_scaler,
)
from .timeutil import format_minute, parse_minute

MODEL_KINDS = ("naive", "seasonal_naive", "ridge", "forest", "external")
DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)


@dataclass(frozen=True)
class SplitFrames:
    train: SupervisedFrame
    validation: SupervisedFrame
    test: SupervisedFrame
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS


def chrono_split(
    frame: SupervisedFrame, fractions: tuple[float, float, float] = DEFAULT_FRACTIONS
) -> SplitFrames:
    """First 70% of rows to train, next 15% to validation, rest to test."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    if np.any(np.diff(frame.anchor_ts) <= 0):
        raise ValueError("frame rows must be in strict chronological order")
    n = frame.n_rows
    n_train = int(np.floor(fractions[0] * n))
    n_val = int(np.floor(fractions[1] * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(f"{n} rows are too few for a {fractions} split")
    idx = np.arange(n)
    return SplitFrames(
        train=frame.take(idx[:n_train]),
        validation=frame.take(idx[n_train : n_train + n_val]),
        test=frame.take(idx[n_train + n_val :]),
        fractions=fractions,
    )


@dataclass(frozen=True)
class TrainedModel:
    kind: str
    columns: tuple[str, ...]
    horizon: int
    params: dict
    scaler: ScalerParams | None = None
    seed: int | None = None
    provenance: dict = field(default_factory=dict)


def _provenance(frame: SupervisedFrame) -> dict:
    return {
        "train_rows": int(frame.n_rows),
        "train_span": [
            format_minute(int(frame.anchor_ts[0])),
            format_minute(int(frame.anchor_ts[-1])),
        ],
        "target": frame.target,
    }


# --- baselines


def train_naive(
    frame: SupervisedFrame, mode: str = "last_value", period: int | None = None
) -> TrainedModel:
    """Persistence baselines.

    ``last_value`` predicts the anchor hour's own target value. ``seasonal``
    predicts the value one period before the target time, read from the lag
    column at offset period - horizon.
    """
    if mode == "last_value":
        column = frame.target
        params = {"column": column}
        kind = "naive"
    elif mode == "seasonal":
        if period is None:
            raise ValueError("seasonal mode requires a period")
        if period < frame.horizon:
            raise ValueError("seasonal period must be at least the horizon")
        offset = period - frame.horizon
        column = frame.target if offset == 0 else f"{frame.target}_lag_{offset}"
        params = {"column": column, "period": int(period)}
        kind = "seasonal_naive"
    else:
        raise ValueError(f"unknown naive mode {mode!r}")
    if column not in frame.X.columns:
        raise ValueError(f"required lag column {column!r} is not in the frame")
    return TrainedModel(
        kind=kind,
        columns=frame.X.columns,
        horizon=frame.horizon,
        params=params,
        provenance=_provenance(frame),
    )


# --- ridge regression


def train_ridge(
    frame: SupervisedFrame, lam: float = 1.0, scaler_method: str = "zscore"
) -> TrainedModel:
    """Penalized least squares with an unpenalized intercept.

    Features are scaled (parameters fitted on this frame only), then
    centered so the intercept absorbs the means. The system is solved by
    SVD-backed least squares on the penalty-augmented matrix, which returns
    the minimum-norm solution when lam = 0 on rank-deficient data.
    """
    if lam < 0:
        raise ValueError("ridge penalty must be non-negative")
    if frame.n_rows == 0:
        raise ValueError("cannot fit on an empty frame")
    scaler = fit_scaler(frame.X, scaler_method, np.arange(frame.n_rows))
    X = apply_scaler(scaler, frame.X).values
    y = frame.y
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    yc = y - y_mean
    if lam > 0:
        root = np.sqrt(lam) * np.eye(X.shape[1])
        A = np.vstack([Xc, root])
        b = np.concatenate([yc, np.zeros(X.shape[1])])
    else:
        A, b = Xc, yc
    beta, *_ = np.linalg.lstsq(A, b, rcond=None)
    intercept = y_mean - float(x_mean @ beta)
    return TrainedModel(
        kind="ridge",
        columns=frame.X.columns,
        horizon=frame.horizon,
        params={"lam": float(lam), "beta": [float(v) for v in beta], "intercept": intercept},
        scaler=scaler,
        provenance=_provenance(frame),
    )


# --- random forest


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 30
    min_samples_leaf: int = 4
    min_samples_split: int = 2
    bootstrap: bool = True
    max_features: float = 1.0  # fraction of features tried per node
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1 or self.max_depth < 1:
            raise ValueError("n_trees and max_depth must be positive")
        if self.min_samples_leaf < 1 or self.min_samples_split < 1:
            raise ValueError("leaf and split minima must be positive")
        if not 0 < self.max_features <= 1:
            raise ValueError("max_features is a fraction in (0, 1]")


def _best_split(
    x: np.ndarray, y: np.ndarray, min_leaf: int
) -> tuple[float, float] | None:
    """(threshold, cost) minimizing summed child SSE, or None if unsplittable."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(ys)
    csum = np.cumsum(ys)
    csq = np.cumsum(ys * ys)
    n_left = np.arange(1, n)
    left_sum, left_sq = csum[:-1], csq[:-1]
    right_sum = csum[-1] - left_sum
    right_sq = csq[-1] - left_sq
    n_right = n - n_left
    cost = (left_sq - left_sum**2 / n_left) + (right_sq - right_sum**2 / n_right)
    valid = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    if not np.any(valid):
        return None
    cost = np.where(valid, cost, np.inf)
    i = int(np.argmin(cost))
    return float((xs[i] + xs[i + 1]) / 2.0), float(cost[i])


_LEAF = -1


def _grow_tree(
    X: np.ndarray, y: np.ndarray, config: ForestConfig, gen: np.random.Generator
) -> list[list[float]]:
    """Depth-first greedy variance-reduction tree as a flat node list.

    Node layout: [feature, threshold, left, right, value]; feature -1
    marks a leaf carrying the training-target mean.
    """
    n_features = X.shape[1]
    m = max(1, int(round(config.max_features * n_features)))
    nodes: list[list[float]] = []
    # stack of (rows, depth, slot); slot < 0 is the root, otherwise it encodes
    # 2*parent for a left child and 2*parent+1 for a right child
    stack: list[tuple[np.ndarray, int, int]] = [(np.arange(len(y)), 0, -1)]
    while stack:
        rows, depth, slot = stack.pop()
        node_id = len(nodes)
        if slot >= 0:
            parent, is_right = divmod(slot, 2)
            nodes[parent][3 if is_right else 2] = node_id
        yy = y[rows]
        leaf_value = float(yy.mean())
        split = None
        if (
            depth < config.max_depth
            and len(rows) >= config.min_samples_split
            and len(rows) >= 2 * config.min_samples_leaf
            and np.ptp(yy) > 0
        ):
            if m < n_features:
                features = gen.choice(n_features, size=m, replace=False)
            else:
                features = np.arange(n_features)
            best = None
            for f in features:
                candidate = _best_split(X[rows, f], yy, config.min_samples_leaf)
                if candidate is not None and (best is None or candidate[1] < best[2]):
                    best = (int(f), candidate[0], candidate[1])
            if best is not None:
                split = best
        if split is None:
            nodes.append([_LEAF, 0.0, _LEAF, _LEAF, leaf_value])
            continue
        f, threshold, _ = split
        nodes.append([f, threshold, _LEAF, _LEAF, leaf_value])
        mask = X[rows, f] <= threshold
        # push right first so the left child is materialized next (preorder)
        stack.append((rows[~mask], depth + 1, node_id * 2 + 1))
        stack.append((rows[mask], depth + 1, node_id * 2))
    return nodes


def _tree_predict(nodes: Sequence[Sequence[float]], X: np.ndarray) -> np.ndarray:
    out = np.empty(len(X))
    pending = [(0, np.arange(len(X)))]
    while pending:
        node_id, rows = pending.pop()
        feature, threshold, left, right, value = nodes[int(node_id)]
        if int(feature) == _LEAF:
            out[rows] = value
            continue
        mask = X[rows, int(feature)] <= threshold
        if mask.any():
            pending.append((int(left), rows[mask]))
        if (~mask).any():
            pending.append((int(right), rows[~mask]))
    return out


def train_forest(frame: SupervisedFrame, config: ForestConfig) -> TrainedModel:
    """Bootstrap-aggregated regression trees on the raw (unscaled) features."""
    if frame.n_rows == 0:
        raise ValueError("cannot fit on an empty frame")
    X, y = frame.X.values, frame.y
    trees = []
    for t in range(config.n_trees):
        gen = rng.substream(config.seed, rng.DOMAIN_FOREST, t)
        if config.bootstrap:
            rows = gen.integers(0, len(y), size=len(y))
            Xb, yb = X[rows], y[rows]
        else:
            Xb, yb = X, y
        trees.append(_grow_tree(Xb, yb, config, gen))
    cfg = asdict(config)
    return TrainedModel(
        kind="forest",
        columns=frame.X.columns,
        horizon=frame.horizon,
        params={"config": cfg, "trees": trees},
        seed=config.seed,
        provenance={**_provenance(frame), "generator": rng.describe(config.seed)},
    )


# --- external models (predictions computed elsewhere, exchanged as CSV)


def make_external_model(
    predictions: dict[int, float], columns: tuple[str, ...], horizon: int
) -> TrainedModel:
    return TrainedModel(
        kind="external",
        columns=columns,
        horizon=horizon,
        params={"predictions": {format_minute(k): float(v) for k, v in predictions.items()}},
    )


def read_external_predictions(source: TextIO | str) -> dict[int, float]:
    """predictions.csv with columns timestamp,prediction (anchor-aligned)."""
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    header = next(reader, None)
    if header != ["timestamp", "prediction"]:
        raise ValueError("expected header timestamp,prediction")
    return {parse_minute(row[0]): float(row[1]) for row in reader if row}


# --- prediction and serialization


def predict(model: TrainedModel, rows: FeatureTable) -> np.ndarray:
    """One finite prediction per row; pure in (model, rows)."""
    if rows.columns != model.columns:
        raise ValueError("feature columns do not match the model's training columns")
    if model.kind in ("naive", "seasonal_naive"):
        return rows.column(model.params["column"]).copy()
    if model.kind == "ridge":
        X = apply_scaler(model.scaler, rows).values
        beta = np.asarray(model.params["beta"])
        return X @ beta + model.params["intercept"]
    if model.kind == "forest":
        trees = model.params["trees"]
        total = np.zeros(rows.n_rows)
        for nodes in trees:
            total += _tree_predict(nodes, rows.values)
        return total / len(trees)
    if model.kind == "external":
        table = model.params["predictions"]
        try:
            return np.asarray(
                [table[format_minute(int(t))] for t in rows.timestamps], dtype=np.float64
            )
        except KeyError as exc:
            raise ValueError(f"external predictions missing timestamp {exc}") from None
    raise ValueError(f"unknown model kind {model.kind!r}")


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format": "edcast-model/1",
        "kind": model.kind,
        "columns": list(model.columns),
        "horizon": model.horizon,
        "params": model.params,
        "scaler": model.scaler.to_dict() if model.scaler else None,
        "seed": model.seed,
        "provenance": model.provenance,
    }


def model_from_dict(data: dict) -> TrainedModel:
    if data.get("format") != "edcast-model/1":
        raise ValueError("not a recognized model file")
    scaler = data.get("scaler")
    return TrainedModel(
        kind=data["kind"],
        columns=tuple(data["columns"]),
        horizon=int(data["horizon"]),
        params=data["params"],
        scaler=ScalerParams.from_dict(scaler) if scaler else None,
        seed=data.get("seed"),
        provenance=data.get("provenance", {}),
    )


def dumps_model(model: TrainedModel) -> str:
    return json.dumps(model_to_dict(model), indent=2, sort_keys=True) + "\n"


def loads_model(text: str) -> TrainedModel:
    return model_from_dict(json.loads(text))


# --- grid search


@dataclass(frozen=True)
class GridEntry:
    config_id: str
    kind: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class GridSpec:
    entries: tuple[GridEntry, ...]

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("grid must contain at least one configuration")


def train_model(
    frame: SupervisedFrame, kind: str, params: dict, seed: int = 0
) -> TrainedModel:
    """Uniform trainer dispatch used by the grid search and the CLI."""
    if kind == "naive":
        return train_naive(frame, mode="last_value")
    if kind == "seasonal_naive":
        return train_naive(frame, mode="seasonal", period=int(params["period"]))
    if kind == "ridge":
        return train_ridge(
            frame,
            lam=float(params.get("lam", 1.0)),
            scaler_method=params.get("scaler", "zscore"),
        )
    if kind == "forest":
        cfg = {k: v for k, v in params.items() if k != "seed"}
        return train_forest(frame, ForestConfig(seed=seed, **cfg))
    raise ValueError(f"unknown model kind {kind!r}")


def grid_search(
    split: SplitFrames, grid: GridSpec, seed: int = 0
) -> tuple[GridEntry, TrainedModel, list[dict]]:
    """Train every entry on the train frame, pick minimal validation MAE.

    Ties keep the earliest grid entry. Entries that fail to train stay in
    the leaderboard with their error message. The winning model is the one
    fitted on the train frame alone, keeping validation MAE an honest
    selection statistic.
    """
    leaderboard: list[dict] = []
    best: tuple[float, int, GridEntry, TrainedModel] | None = None
    for position, entry in enumerate(grid.entries):
        row = {"config_id": entry.config_id, "kind": entry.kind, "params": entry.params}
        try:
            model = train_model(split.train, entry.kind, entry.params, seed=seed)
            errors = predict(model, split.validation.X) - split.validation.y
            val_mae = float(np.abs(errors).mean())
            val_mse = float((errors**2).mean())
            row.update(status="ok", val_mae=val_mae, val_mse=val_mse)
            if best is None or val_mae < best[0]:
                best = (val_mae, position, entry, model)
        except Exception as exc:  # noqa: BLE001 - a failed config is a result
            row.update(status="failed", error=str(exc), val_mae=None, val_mse=None)
        leaderboard.append(row)
    if best is None:
        raise RuntimeError("every grid configuration failed to train")
    return best[2], best[3], leaderboard
