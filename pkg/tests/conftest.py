import numpy as np
import pytest

from deltabptt.cells import CellParams
from deltabptt.data import smooth_noise


def make_cell(kind, n_x, n_h, seed=0):
    return CellParams.init(kind, n_x, n_h, np.random.default_rng(seed))


def make_stream(T, n_x, seed=0, smoothness=0.9):
    return smooth_noise(np.random.default_rng(seed + 1000), 1, T, n_x, 1.0, smoothness)[0]


def rel_err(a, b):
    scale = np.max(np.abs(b))
    d = np.max(np.abs(a - b))
    return d / scale if scale else d


@pytest.fixture(params=["rnn", "lstm", "gru"])
def kind(request):
    return request.param


ACCEPTANCE_LINES = []


def report_criterion(number, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
