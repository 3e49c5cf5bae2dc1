import numpy as np
import pytest

from husimiflow.grid import box_grid
from husimiflow.symbols import parse_poly

HO = "0.5*p^2 + 0.5*x^2"


@pytest.fixture(scope="session")
def g64():
    return box_grid(64, 10.0)


@pytest.fixture(scope="session")
def ho():
    return parse_poly(HO)


def rel_max(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.abs(a - b).max() / np.abs(b).max())


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
