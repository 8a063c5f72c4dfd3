import math

import pytest

from lagmhd.grid import Grid

TWO_PI = 2.0 * math.pi


@pytest.fixture(params=[32, 64], ids=lambda n: f"N{n}")
def grid(request):
    return Grid(request.param, request.param)


@pytest.fixture
def grid32():
    return Grid(32, 32)


@pytest.fixture
def grid64():
    return Grid(64, 64)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line; printed now and repeated in the terminal summary."""
    def _report(number: int, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
