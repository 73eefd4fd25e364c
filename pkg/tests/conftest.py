from __future__ import annotations

import numpy as np
import pytest

from sroptions.env_grid import load_map, parse_map

TWO_CELL = "..\n"
CHAIN3 = "...\n"
OPEN3 = "...\n...\n...\n"


@pytest.fixture
def two_cell():
    return parse_map(TWO_CELL, "two")


@pytest.fixture
def open5():
    return load_map("open5x5")


@pytest.fixture
def tworooms():
    return load_map("tworooms")


@pytest.fixture
def grid1():
    return load_map("grid1")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def report(criterion: int, ok: bool, detail: str) -> None:
    """Record (and print) one acceptance line; shown again in the terminal summary."""
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
