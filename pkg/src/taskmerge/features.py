"""Feature rows for merge cases, the dataset CSV format, and train/test split."""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

from .workload import MAX_DEGREE, Kind, Operation, VideoMeta

PathLike = Union[str, Path]

FEATURE_NAMES = (
    "duration_s", "size_kb", "framerate", "width", "height",
    "b_count", "s_count", "r_count", "mpeg4", "vp9", "hevc",
)
CSV_COLUMNS = FEATURE_NAMES + ("saving",)
N_FEATURES = len(FEATURE_NAMES)

# Column slices into a feature matrix.
STATIC_COLUMNS = slice(0, 5)
COMPOSITION_COLUMNS = slice(5, 11)
_INT_COLUMNS = frozenset(range(5, 11))
_FLAG_COLUMNS = frozenset(range(8, 11))
_COUNT_FOR_KIND = {Kind.BITRATE: "b_count", Kind.FRAMERATE: "s_count", Kind.RESOLUTION: "r_count"}


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    duration: float
    size: float
    framerate: float
    width: float
    height: float
    b_count: int = 0
    s_count: int = 0
    r_count: int = 0
    mpeg4: int = 0
    vp9: int = 0
    hevc: int = 0

    @property
    def degree(self) -> int:
        return self.b_count + self.s_count + self.r_count + self.mpeg4 + self.vp9 + self.hevc

    def as_tuple(self) -> tuple:
        return astuple(self)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "FeatureVector":
        if len(values) != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} feature values, got {len(values)}")
        return cls(*[int(v) if i in _INT_COLUMNS else float(v) for i, v in enumerate(values)])


def encode(video: VideoMeta, ops: Sequence[Operation]) -> FeatureVector:
    """Encode a merge case: segment statics plus operation counts.

    VIC parameter values are dropped on purpose; only how many operations of
    each kind the merged task holds is kept. Codec operations are one-hot.
    """
    if not 1 <= len(ops) <= MAX_DEGREE:
        raise ValueError(f"a merge case holds 1..{MAX_DEGREE} operations, got {len(ops)}")
    counts = dict.fromkeys(("b_count", "s_count", "r_count", "mpeg4", "vp9", "hevc"), 0)
    for op in ops:
        if op.kind is Kind.CODEC:
            counts[op.parameter] += 1
        else:
            counts[_COUNT_FOR_KIND[op.kind]] += 1
    # Flags stay binary even if a case repeats a codec.
    for flag in ("mpeg4", "vp9", "hevc"):
        counts[flag] = min(counts[flag], 1)
    return FeatureVector(
        float(video.duration), float(video.size), float(video.framerate),
        float(video.width), float(video.height), **counts,
    )


def degrees(X: np.ndarray) -> np.ndarray:
    """Degree of merging of each row of a feature matrix."""
    return np.asarray(X)[:, COMPOSITION_COLUMNS].sum(axis=1).round().astype(int)


@dataclass(frozen=True)
class Sample:
    features: FeatureVector
    target: float


class Dataset:
    """Feature matrix plus saving targets, in row order."""

    def __init__(self, X, y):
        X = np.asarray(X, dtype=float).reshape(-1, N_FEATURES) if np.size(X) else np.empty((0, N_FEATURES))
        y = np.asarray(y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} feature rows but {y.shape[0]} targets")
        if not np.all(np.isfinite(y)):
            raise ValueError("targets must be finite")
        self.X = X
        self.y = y

    @classmethod
    def from_samples(cls, samples: Iterable[Sample]) -> "Dataset":
        samples = list(samples)
        X = [s.features.as_tuple() for s in samples]
        return cls(np.array(X, dtype=float) if X else np.empty((0, N_FEATURES)), [s.target for s in samples])

    def __len__(self) -> int:
        return len(self.y)

    def __getitem__(self, i: int) -> Sample:
        return Sample(FeatureVector.from_sequence(self.X[i]), float(self.y[i]))

    def __iter__(self) -> Iterator[Sample]:
        return (self[i] for i in range(len(self)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return np.array_equal(self.X, other.X) and np.array_equal(self.y, other.y)

    def subset(self, index) -> "Dataset":
        return Dataset(self.X[index], self.y[index])

    @property
    def degrees(self) -> np.ndarray:
        return degrees(self.X)


def _fmt(value: float, integral: bool) -> str:
    if integral:
        return str(int(value))
    # repr gives the shortest string that round-trips exactly.
    return repr(float(value))


def write_csv(dataset: Dataset, path: PathLike) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row, target in zip(dataset.X, dataset.y):
            writer.writerow([_fmt(v, i in _INT_COLUMNS) for i, v in enumerate(row)] + [_fmt(target, False)])


def parse_row(fields: Sequence[str], where: str = "row") -> tuple[list[float], float]:
    """Validate one CSV data row and return (features, saving)."""
    if len(fields) != len(CSV_COLUMNS):
        raise DatasetFormatError(f"{where}: expected {len(CSV_COLUMNS)} columns, got {len(fields)}")
    values = []
    for i, text in enumerate(fields):
        name = CSV_COLUMNS[i]
        try:
            v = float(text)
        except ValueError:
            raise DatasetFormatError(f"{where}: {name}={text!r} is not a number") from None
        if not math.isfinite(v):
            raise DatasetFormatError(f"{where}: {name} is not finite")
        if i < 5 and v <= 0:
            raise DatasetFormatError(f"{where}: {name} must be positive")
        if i in _INT_COLUMNS:
            if v != int(v) or v < 0:
                raise DatasetFormatError(f"{where}: {name}={text!r} must be a non-negative integer")
            if i in _FLAG_COLUMNS and v > 1:
                raise DatasetFormatError(f"{where}: {name} is a 0/1 flag")
        values.append(v)
    *features, saving = values
    degree = sum(features[COMPOSITION_COLUMNS])
    if not 1 <= degree <= MAX_DEGREE:
        raise DatasetFormatError(f"{where}: degree of merging {degree:g} outside [1, {MAX_DEGREE}]")
    if not 0.0 <= saving < 1.0:
        raise DatasetFormatError(f"{where}: saving {saving!r} outside [0, 1)")
    return features, saving


def read_csv(path: PathLike) -> Dataset:
    rows, targets = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise DatasetFormatError(f"{path}:1: header must be {','.join(CSV_COLUMNS)}")
        for lineno, fields in enumerate(reader, start=2):
            if not fields:
                continue
            features, saving = parse_row(fields, where=f"{path}:{lineno}")
            rows.append(features)
            targets.append(saving)
    return Dataset(np.array(rows, dtype=float) if rows else np.empty((0, N_FEATURES)), targets)


def split(dataset: Dataset, train_fraction: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Random train/test partition with round-half-up(train_fraction * N) training rows."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    n = len(dataset)
    if n < 2:
        raise ValueError("need at least two samples to split")
    n_train = min(max(math.floor(train_fraction * n + 0.5), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.subset(np.sort(perm[:n_train])), dataset.subset(np.sort(perm[n_train:]))
