"""Lookup-table baseline: mean saving per operation composition."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from math import fsum
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from .features import COMPOSITION_COLUMNS, N_FEATURES
from .gbdt import MODEL_FORMAT, MODEL_VERSION, ModelFormatError, _as_matrix, read_envelope, write_envelope

Key = tuple[int, int, int, int, int, int]


def composition_key(row) -> Key:
    """(b_count, s_count, r_count, mpeg4, vp9, hevc) of one feature row."""
    return tuple(int(round(v)) for v in np.asarray(row, dtype=float)[COMPOSITION_COLUMNS])


@dataclass(frozen=True)
class NaiveModel:
    table: Mapping[Key, float]
    global_mean: float
    feature_count: int = N_FEATURES

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X, self.feature_count)
        return np.array([self.table.get(composition_key(row), self.global_mean) for row in X])


def fit_naive(train_set) -> NaiveModel:
    X, y = (train_set.X, train_set.y) if hasattr(train_set, "X") else train_set
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("cannot fit the lookup table on an empty dataset")
    groups: dict[Key, list[float]] = defaultdict(list)
    for row, target in zip(X, y):
        groups[composition_key(row)].append(float(target))
    # fsum keeps the means independent of row order.
    table = {k: fsum(v) / len(v) for k, v in sorted(groups.items())}
    return NaiveModel(table, fsum(y.tolist()) / len(y), X.shape[1])


def predict_naive(model: NaiveModel, x) -> float:
    if hasattr(x, "as_array"):
        x = x.as_array()
    return float(model.predict(x)[0])


def naive_to_dict(model: NaiveModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": "naive",
        "feature_count": model.feature_count,
        "global_mean": model.global_mean,
        "table": [{"key": list(k), "mean": v} for k, v in model.table.items()],
    }


def naive_from_dict(data: dict) -> NaiveModel:
    try:
        table = {}
        for entry in data["table"]:
            key = tuple(int(v) for v in entry["key"])
            if len(key) != 6:
                raise ModelFormatError(f"composition key {key} must have 6 entries")
            table[key] = float(entry["mean"])
        return NaiveModel(table, float(data["global_mean"]), int(data["feature_count"]))
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed lookup table: {exc!r}") from None


def save_naive(model: NaiveModel, path: Union[str, Path]) -> None:
    write_envelope(naive_to_dict(model), path)


def load_naive(path: Union[str, Path]) -> NaiveModel:
    return naive_from_dict(read_envelope(path, kind="naive"))
