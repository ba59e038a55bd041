"""Tasks, operations, and hash-signature detection of mergeable tasks.

Arriving tasks are checked against three signature tables, one per
similarity level, so detecting a merge partner costs a constant number of
dictionary probes regardless of how many tasks are pending.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Union

MAX_DEGREE = 5
MAX_SEGMENT_SECONDS = 2.0


class Kind(str, enum.Enum):
    BITRATE = "bitrate"
    FRAMERATE = "framerate"
    RESOLUTION = "resolution"
    CODEC = "codec"

    @property
    def is_vic(self) -> bool:
        return self is not Kind.CODEC


# Parameter literals as they appear in workload files.
PARAMETERS: dict[Kind, tuple[str, ...]] = {
    Kind.BITRATE: ("384K", "512K", "768K", "1024K", "1536K"),
    Kind.FRAMERATE: ("10", "15", "20", "30", "40"),
    Kind.RESOLUTION: ("352x288", "680x320", "720x480", "1280x800", "1920x1080"),
    Kind.CODEC: ("mpeg4", "hevc", "vp9"),
}


class WorkloadError(ValueError):
    """Malformed task, operation, or workload file."""


class DuplicateTaskError(WorkloadError):
    """A task_id was admitted twice."""


class InvalidGroupError(WorkloadError):
    """Tasks that cannot form one merge group."""


@dataclass(frozen=True)
class VideoMeta:
    segment_id: str
    duration: float
    size: float
    framerate: float
    width: int
    height: int

    def __post_init__(self):
        for name in ("duration", "size", "framerate", "width", "height"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise WorkloadError(f"{name} must be positive, got {value!r}")
        if self.duration > MAX_SEGMENT_SECONDS:
            raise WorkloadError(
                f"segment duration {self.duration} exceeds {MAX_SEGMENT_SECONDS} s"
            )
        if int(self.width) != self.width or int(self.height) != self.height:
            raise WorkloadError("width and height must be integers")


@dataclass(frozen=True, order=True)
class Operation:
    kind: Kind
    parameter: str

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        param = normalize_parameter(kind, self.parameter)
        object.__setattr__(self, "parameter", param)

    @classmethod
    def parse(cls, kind: str, parameter: str) -> "Operation":
        try:
            k = Kind(kind.strip().lower())
        except ValueError:
            raise WorkloadError(f"unknown operation kind {kind!r}") from None
        return cls(k, parameter)

    def __str__(self):
        return f"{self.kind.value}:{self.parameter}"


def normalize_parameter(kind: Kind, parameter) -> str:
    text = str(parameter).strip()
    if kind is Kind.BITRATE:
        text = text.upper()
    elif kind is Kind.FRAMERATE:
        text = text.lower().removesuffix("fps").strip()
    elif kind is Kind.RESOLUTION:
        text = text.lower().replace("×", "x").replace(" ", "")
    else:
        text = text.lower().replace("-", "").replace("h.265/", "")
    if text not in PARAMETERS[kind]:
        raise WorkloadError(f"parameter {parameter!r} is not valid for {kind.value}")
    return text


def all_operations() -> list[Operation]:
    """The 18 distinct transcoding operations."""
    return [Operation(kind, p) for kind, params in PARAMETERS.items() for p in params]


@dataclass(frozen=True)
class TranscodeTask:
    task_id: str
    video: VideoMeta
    operation: Operation


class SimilarityLevel(enum.IntEnum):
    """Ordered by strength: a higher value implies every lower one."""

    NONE = 0
    DATA_ONLY = 1
    DATA_OPERATION = 2
    TASK = 3


def _canonical(task: TranscodeTask) -> tuple[tuple, tuple, tuple]:
    seg = task.video.segment_id
    kind = task.operation.kind.value
    return (seg, kind, task.operation.parameter), (seg, kind), (seg,)


def _stable_hash(parts: tuple) -> int:
    payload = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


def canonical_signatures(task: TranscodeTask) -> tuple[int, int, int]:
    """Return (task_key, dataop_key, dataonly_key) for a task."""
    return tuple(_stable_hash(t) for t in _canonical(task))


def classify_pair(a: TranscodeTask, b: TranscodeTask) -> SimilarityLevel:
    ta, oa, da = _canonical(a)
    tb, ob, db = _canonical(b)
    if ta == tb:
        return SimilarityLevel.TASK
    if oa == ob:
        return SimilarityLevel.DATA_OPERATION
    if da == db:
        return SimilarityLevel.DATA_ONLY
    return SimilarityLevel.NONE


@dataclass(eq=False)
class MergeGroup:
    group_id: int
    tasks: list[TranscodeTask] = field(default_factory=list)
    level: SimilarityLevel = SimilarityLevel.NONE

    @property
    def degree(self) -> int:
        return len(self.tasks)

    @property
    def video(self) -> VideoMeta:
        return self.tasks[0].video

    @property
    def operations(self) -> list[Operation]:
        return [t.operation for t in self.tasks]

    @property
    def is_open(self) -> bool:
        return len(self.tasks) < MAX_DEGREE


def group_level(tasks: list[TranscodeTask]) -> SimilarityLevel:
    """Weakest pairwise similarity among the tasks (NONE for a singleton)."""
    if len(tasks) < 2:
        return SimilarityLevel.NONE
    return min(
        classify_pair(tasks[i], tasks[j])
        for i in range(len(tasks))
        for j in range(i + 1, len(tasks))
    )


class SignatureTables:
    """Three hash tables mapping signatures to open merge groups.

    Single writer: call :meth:`admit` from one thread at a time. Buckets are
    keyed by the 64-bit signature; probing compares full canonical tuples, so
    a hash collision can never merge unrelated tasks.
    """

    def __init__(self):
        self._tables: tuple[dict[int, list[MergeGroup]], ...] = ({}, {}, {})
        self._task_ids: set[str] = set()
        self.groups: list[MergeGroup] = []

    def __len__(self):
        return len(self.groups)

    def open_groups(self) -> Iterator[MergeGroup]:
        return (g for g in self.groups if g.is_open)

    def lookup(self, task: TranscodeTask, level: SimilarityLevel) -> list[MergeGroup]:
        """Open groups holding a task that matches ``task`` at ``level``."""
        slot = SimilarityLevel.TASK - level
        key = canonical_signatures(task)[slot]
        want = _canonical(task)[slot]
        return [
            g
            for g in self._tables[slot].get(key, [])
            if any(_canonical(t)[slot] == want for t in g.tasks)
        ]

    def admit(self, task: TranscodeTask) -> tuple[MergeGroup, SimilarityLevel]:
        if task.task_id in self._task_ids:
            raise DuplicateTaskError(f"task_id {task.task_id!r} already admitted")
        for level in (
            SimilarityLevel.TASK,
            SimilarityLevel.DATA_OPERATION,
            SimilarityLevel.DATA_ONLY,
        ):
            candidates = self.lookup(task, level)
            if candidates:
                group = min(candidates, key=lambda g: g.group_id)
                self._join(group, task)
                return group, level
        group = MergeGroup(group_id=len(self.groups))
        self.groups.append(group)
        self._join(group, task)
        return group, SimilarityLevel.NONE

    def _join(self, group: MergeGroup, task: TranscodeTask) -> None:
        self._task_ids.add(task.task_id)
        group.tasks.append(task)
        group.level = group_level(group.tasks)
        if group.is_open:
            for table, key in zip(self._tables, canonical_signatures(task)):
                bucket = table.setdefault(key, [])
                if group not in bucket:
                    bucket.append(group)
        else:
            self._close(group)

    def _close(self, group: MergeGroup) -> None:
        for t in group.tasks:
            for table, key in zip(self._tables, canonical_signatures(t)):
                bucket = table.get(key)
                if bucket and group in bucket:
                    bucket.remove(group)
                    if not bucket:
                        del table[key]


def form_groups(tasks: Iterable[TranscodeTask]) -> list[MergeGroup]:
    tables = SignatureTables()
    for t in tasks:
        tables.admit(t)
    return tables.groups


def count_merge_cases(num_tasks: int, max_degree: int) -> int:
    """Number of distinct merged tasks of degree 2..max_degree from num_tasks."""
    if not 2 <= max_degree <= num_tasks:
        raise ValueError("require 2 <= max_degree <= num_tasks")
    total = sum(math.comb(num_tasks, k) for k in range(2, max_degree + 1))
    if total > 2**63 - 1:
        raise OverflowError(f"merge case count for C({num_tasks}, <= {max_degree}) exceeds int64")
    return total


# -- workload files ---------------------------------------------------------

WORKLOAD_FIELDS = (
    "task_id", "segment_id", "duration_s", "size_kb", "framerate",
    "width", "height", "kind", "parameter",
)

PathLike = Union[str, Path]


def read_workload(path: PathLike) -> list[TranscodeTask]:
    """Parse a workload file. A header row and blank lines are skipped."""
    tasks: list[TranscodeTask] = []
    videos: dict[str, VideoMeta] = {}
    seen: set[str] = set()
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row) or row[0].lstrip().startswith("#"):
                continue
            if tuple(c.strip() for c in row) == WORKLOAD_FIELDS:
                continue
            if len(row) != len(WORKLOAD_FIELDS):
                raise WorkloadError(f"{path}:{lineno}: expected {len(WORKLOAD_FIELDS)} fields, got {len(row)}")
            task_id, seg, dur, size, fr, w, h, kind, param = (c.strip() for c in row)
            try:
                video = VideoMeta(seg, float(dur), float(size), float(fr), int(w), int(h))
                op = Operation.parse(kind, param)
            except (WorkloadError, ValueError) as exc:
                raise WorkloadError(f"{path}:{lineno}: {exc}") from None
            if seg in videos and videos[seg] != video:
                raise WorkloadError(f"{path}:{lineno}: segment {seg!r} redefined with different metadata")
            if task_id in seen:
                raise DuplicateTaskError(f"{path}:{lineno}: duplicate task_id {task_id!r}")
            seen.add(task_id)
            videos.setdefault(seg, video)
            tasks.append(TranscodeTask(task_id, videos[seg], op))
    return tasks


def write_workload(tasks: Iterable[TranscodeTask], path: PathLike) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(WORKLOAD_FIELDS)
        for t in tasks:
            v = t.video
            writer.writerow([
                t.task_id, v.segment_id, repr(float(v.duration)), repr(float(v.size)),
                repr(float(v.framerate)), v.width, v.height,
                t.operation.kind.value, t.operation.parameter,
            ])
