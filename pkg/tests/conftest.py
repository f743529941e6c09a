import numpy as np
import pytest

from crowdbp.core import CrowdDataset

ACCEPTANCE_LINES = []


def record(criterion: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tiny_dataset(tasks, workers, labels, N=None, M=None, K=2, features=None, truth=None):
    N = N if N is not None else max(tasks) + 1
    M = M if M is not None else max(workers) + 1
    return CrowdDataset(N, M, K, tasks, workers, labels, features, truth)
