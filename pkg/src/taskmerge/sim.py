"""Merge-aware batch scheduling simulation.

All tasks are queued at time zero and dispatched first-come-first-served to
identical workers. Merging replaces a group's member tasks by one job whose
duration comes from the execution-time oracle.
"""

from __future__ import annotations

import csv
import heapq
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence, Union

import numpy as np

from .features import encode
from .oracle import OracleConfig, exec_time_individual, exec_time_merged
from .workload import MAX_DEGREE, PARAMETERS, Kind, Operation, SignatureTables, TranscodeTask, VideoMeta

TRACE_COLUMNS = (
    "group_id", "degree", "level", "predicted_saving",
    "actual_saving", "merged_time", "sequential_time",
)


class SimConfigError(ValueError):
    pass


class Predictor(Protocol):
    def predict(self, X) -> np.ndarray: ...


@dataclass(frozen=True)
class MergePolicy:
    """``never``, ``always``, or ``threshold`` on the predicted saving."""

    mode: str = "always"
    min_predicted_saving: float = 0.0

    def __post_init__(self):
        if self.mode not in ("never", "always", "threshold"):
            raise SimConfigError(f"unknown merge policy {self.mode!r}")
        if not 0.0 <= self.min_predicted_saving < 1.0:
            raise SimConfigError("threshold must lie in [0, 1)")

    @classmethod
    def never(cls) -> "MergePolicy":
        return cls("never")

    @classmethod
    def always(cls) -> "MergePolicy":
        return cls("always")

    @classmethod
    def threshold(cls, value: float) -> "MergePolicy":
        return cls("threshold", value)


@dataclass
class GroupTrace:
    group_id: int
    degree: int
    level: str
    predicted_saving: Optional[float]
    actual_saving: float
    merged_time: float
    sequential_time: float
    merged: bool


@dataclass
class SimReport:
    makespan_merged: float
    makespan_sequential: float
    saving_pct: float
    groups_formed: int
    degree_histogram: dict[int, int]
    trace: list[GroupTrace] = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {
            "makespan_merged": self.makespan_merged,
            "makespan_sequential": self.makespan_sequential,
            "saving_pct": self.saving_pct,
            "groups_formed": self.groups_formed,
            "degree_histogram": {str(k): v for k, v in sorted(self.degree_histogram.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def fcfs_makespan(durations: Sequence[float], workers: int) -> float:
    """Makespan of jobs dispatched in order, each to the earliest-free worker."""
    if workers < 1:
        raise SimConfigError("workers must be >= 1")
    free = [(0.0, w) for w in range(workers)]
    end = 0.0
    for d in durations:
        t, w = heapq.heappop(free)
        t += d
        end = max(end, t)
        heapq.heappush(free, (t, w))
    return end


def run_sim(
    tasks: Sequence[TranscodeTask],
    policy: MergePolicy,
    predictor: Optional[Predictor] = None,
    cfg: OracleConfig | None = None,
    workers: int = 1,
) -> SimReport:
    """Simulate merged versus sequential execution of a batch of tasks."""
    if not tasks:
        raise SimConfigError("empty task list")
    if policy.mode == "threshold" and predictor is None:
        raise SimConfigError("threshold policy needs a predictor")
    if workers < 1:
        raise SimConfigError("workers must be >= 1")
    cfg = cfg or OracleConfig()

    tables = SignatureTables()
    for task in tasks:
        tables.admit(task)
    position = {t.task_id: i for i, t in enumerate(tasks)}
    groups = tables.groups

    predicted: list[Optional[float]] = [None] * len(groups)
    if predictor is not None:
        X = np.array([encode(g.video, g.operations).as_tuple() for g in groups], dtype=float)
        predicted = [float(p) for p in predictor.predict(X)]

    flags = []
    for g, p in zip(groups, predicted):
        if policy.mode == "never" or g.degree == 1:
            flags.append(False)
        elif policy.mode == "always":
            flags.append(True)
        else:
            flags.append(p >= policy.min_predicted_saving)

    trace = []
    for g, p, merged in zip(groups, predicted, flags):
        seq = sum(exec_time_individual(t.video, t.operation, cfg) for t in g.tasks)
        mt = exec_time_merged(g.video, g.operations, cfg)
        trace.append(GroupTrace(g.group_id, g.degree, g.level.name, p, (seq - mt) / seq, mt, seq, merged))

    def schedule(merge_flags):
        jobs = []
        for g, merged in zip(groups, merge_flags):
            if merged:
                start = min(position[t.task_id] for t in g.tasks)
                jobs.append((start, exec_time_merged(g.video, g.operations, cfg), g.degree))
            else:
                for t in g.tasks:
                    jobs.append((position[t.task_id], exec_time_individual(t.video, t.operation, cfg), 1))
        jobs.sort(key=lambda j: j[0])
        return fcfs_makespan([d for _, d, _ in jobs], workers), Counter(k for _, _, k in jobs)

    makespan_merged, histogram = schedule(flags)
    makespan_seq, _ = schedule([False] * len(groups))
    saving = 0.0 if makespan_merged == makespan_seq else (makespan_seq - makespan_merged) / makespan_seq * 100.0
    return SimReport(
        makespan_merged=makespan_merged,
        makespan_sequential=makespan_seq,
        saving_pct=saving,
        groups_formed=sum(histogram.values()),
        degree_histogram=dict(sorted(histogram.items())),
        trace=trace,
    )


def write_trace(report: SimReport, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for g in report.trace:
            writer.writerow([
                g.group_id, g.degree, g.level,
                "" if g.predicted_saving is None else repr(g.predicted_saving),
                repr(g.actual_saving), repr(g.merged_time), repr(g.sequential_time),
            ])


def makespan_table(video: VideoMeta, kind: Kind, cfg: OracleConfig | None = None) -> dict[int, tuple[float, float]]:
    """Merged and sequential time of k distinct parameters of one VIC kind, k = 2..5."""
    kind = Kind(kind)
    if not kind.is_vic:
        raise ValueError("makespan_table needs a VIC operation kind")
    cfg = cfg or OracleConfig()
    ops = [Operation(kind, p) for p in PARAMETERS[kind]]
    table = {}
    for k in range(2, MAX_DEGREE + 1):
        sequential = sum(exec_time_individual(video, op, cfg) for op in ops[:k])
        table[k] = (exec_time_merged(video, ops[:k], cfg), sequential)
    return table
