"""Prediction metrics and hyperparameter sweeps."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .baseline import NaiveModel, naive_from_dict
from .features import Dataset
from .gbdt import Hyperparams, ModelFormatError, SavingModel, model_from_dict, read_envelope, train

PathLike = Union[str, Path]

DEFAULT_TAU = 0.12
AXES = {
    "M": "num_trees",
    "L": "learning_rate",
    "D": "max_depth",
    "S": "min_samples_split",
    "J": "min_samples_leaf",
}
SWEEP_COLUMNS = ("axis", "series", "value", "series_value", "train_rmse", "test_rmse")


def _paired(predictions, truths) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predictions, dtype=float).reshape(-1)
    e = np.asarray(truths, dtype=float).reshape(-1)
    if p.shape != e.shape:
        raise ValueError(f"{p.size} predictions but {e.size} truths")
    if p.size == 0:
        raise ValueError("no predictions to score")
    return p, e


def rmse(predictions, truths) -> float:
    p, e = _paired(predictions, truths)
    d = np.abs(p - e)
    scale = float(d.max())
    if scale == 0.0:
        return 0.0
    # Scaling first keeps tiny deviations from underflowing to zero.
    return scale * math.sqrt(float(np.mean((d / scale) ** 2)))


def accuracy(predictions, truths, tau: float = DEFAULT_TAU) -> float:
    """Percentage of predictions within ``tau`` of the truth (inclusive)."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    p, e = _paired(predictions, truths)
    return 100.0 * np.count_nonzero(np.abs(p - e) <= tau) / p.size


@dataclass(frozen=True)
class EvalReport:
    rmse: float
    accuracy_pct: float
    tau: float
    count: int
    by_degree: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "accuracy_pct": self.accuracy_pct,
            "tau": self.tau,
            "count": self.count,
            "by_degree": {str(k): v.as_dict() for k, v in self.by_degree.items()},
        }


def evaluate(model, data: Dataset, tau: float = DEFAULT_TAU, per_degree: bool = True) -> EvalReport:
    """Score any model with a ``predict(X)`` method on a dataset."""
    preds = model.predict(data.X)
    return report(preds, data.y, tau, data.degrees if per_degree else None)


def report(predictions, truths, tau: float = DEFAULT_TAU, degrees=None) -> EvalReport:
    p, e = _paired(predictions, truths)
    by_degree = {}
    if degrees is not None:
        degrees = np.asarray(degrees)
        for k in np.unique(degrees):
            sel = degrees == k
            by_degree[int(k)] = report(p[sel], e[sel], tau)
    return EvalReport(rmse(p, e), accuracy(p, e, tau), tau, int(p.size), by_degree)


def load_predictor(path: PathLike) -> Union[SavingModel, NaiveModel]:
    """Load either model kind from the shared model-file envelope."""
    data = read_envelope(path)
    if data.get("kind") == "gbdt":
        return model_from_dict(data)
    if data.get("kind") == "naive":
        return naive_from_dict(data)
    raise ModelFormatError(f"{path}: unknown model kind {data.get('kind')!r}")


# -- sweeps -----------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: Sequence
    fixed: Hyperparams = field(default_factory=Hyperparams)
    series: Optional[str] = None
    series_values: Sequence = ()

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}; choose from {sorted(AXES)}")
        _check_axis_values(self.axis, self.values)
        if self.series is not None:
            if self.series not in AXES or self.series == self.axis:
                raise ValueError(f"invalid series axis {self.series!r}")
            _check_axis_values(self.series, self.series_values)
        elif self.series_values:
            raise ValueError("series values given without a series axis")


def _check_axis_values(axis: str, values: Sequence) -> None:
    if len(values) == 0:
        raise ValueError(f"no values for axis {axis}")
    diffs = np.diff(np.asarray(values, dtype=float))
    if not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ValueError(f"values for axis {axis} must be strictly ordered")


class SweepError(RuntimeError):
    """Training failed at one grid point."""


@dataclass(frozen=True)
class SweepRow:
    axis: str
    series: str
    value: float
    series_value: Optional[float]
    train_rmse: float
    test_rmse: float


def cast_axis_value(axis: str, value):
    return float(value) if axis == "L" else int(value)


def _grid_job(args):
    hp, axis, values, series, series_value, train_xy, test_xy = args
    try:
        return _run_grid(hp, axis, values, train_xy, test_xy)
    except Exception as exc:
        where = f"{axis}={values if axis == 'M' else values[0]}"
        if series:
            where += f", {series}={series_value}"
        raise SweepError(f"training failed at {where}: {exc}") from exc


def _run_grid(hp, axis, values, train_xy, test_xy):
    if axis == "M":
        # Boosting is prefix-stable: the model with m trees is the first m
        # trees of the largest one, so one fit covers every M value.
        top = max(int(v) for v in values)
        model = train(train_xy, hp.replace(num_trees=top))
        train_stages = list(model.staged_predict(train_xy[0]))
        test_stages = list(model.staged_predict(test_xy[0]))
        return [
            (v, rmse(train_stages[int(v)], train_xy[1]), rmse(test_stages[int(v)], test_xy[1]))
            for v in values
        ]
    out = []
    for v in values:
        model = train(train_xy, hp.replace(**{AXES[axis]: cast_axis_value(axis, v)}))
        out.append((v, rmse(model.predict(train_xy[0]), train_xy[1]), rmse(model.predict(test_xy[0]), test_xy[1])))
    return out


def sweep(spec: SweepSpec, train_set: Dataset, test_set: Dataset, jobs: int = 1) -> list[SweepRow]:
    """Train one model per grid point and report train and test RMSE.

    Rows follow the order of ``spec.series_values`` then ``spec.values``.
    """
    series_values = list(spec.series_values) if spec.series else [None]
    train_xy = (train_set.X, train_set.y)
    test_xy = (test_set.X, test_set.y)
    tasks = []
    for sv in series_values:
        hp = spec.fixed if sv is None else spec.fixed.replace(**{AXES[spec.series]: cast_axis_value(spec.series, sv)})
        if spec.axis == "M":
            tasks.append((hp, spec.axis, list(spec.values), spec.series, sv, train_xy, test_xy))
        else:
            tasks.extend((hp, spec.axis, [v], spec.series, sv, train_xy, test_xy) for v in spec.values)

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_grid_job, tasks))
    else:
        results = [_grid_job(t) for t in tasks]

    rows = []
    for task, result in zip(tasks, results):
        sv = task[4]
        for value, tr, te in result:
            rows.append(SweepRow(spec.axis, spec.series or "", value, sv, tr, te))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path: PathLike) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for r in rows:
            writer.writerow([
                r.axis, r.series, r.value, "" if r.series_value is None else r.series_value,
                repr(r.train_rmse), repr(r.test_rmse),
            ])
