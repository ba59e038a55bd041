import pytest

from taskmerge.oracle import OracleConfig
from taskmerge.workload import Kind, Operation, TranscodeTask, VideoMeta


@pytest.fixture
def video():
    return VideoMeta("segA", 2.0, 1000.0, 30.0, 1280, 720)


@pytest.fixture
def quiet_cfg():
    """Oracle without noise."""
    return OracleConfig(vic_noise_sigma=0.0, codec_noise_sigma=0.0)


def make_task(task_id, video, kind, param):
    return TranscodeTask(task_id, video, Operation(Kind(kind), param))


# One verdict line per acceptance criterion, printed after the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
