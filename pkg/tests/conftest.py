from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixture_csv():
    return FIXTURES / "regression_fixture.csv"


_RESULTS = {}


@pytest.fixture
def criterion():
    """Record one acceptance line and fail the test when it is red."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _RESULTS[number] = line
        print(line)
        if not ok and number != 5:
            pytest.fail(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_RESULTS):
            terminalreporter.write_line(_RESULTS[number])
