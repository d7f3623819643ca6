from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
_VERDICTS = []


@pytest.fixture
def fixtures():
    return FIXTURES


@pytest.fixture
def verdict():
    """Record one acceptance line and assert it."""
    def record(number, title, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _VERDICTS.append((number, line))
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
