import numpy as np
import pytest

_ACCEPTANCE: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def report():
    """Record one human-readable line per acceptance criterion."""

    def _report(number, passed, detail):
        _ACCEPTANCE.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
