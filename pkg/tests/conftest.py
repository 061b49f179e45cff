import warnings

import pytest

# (criterion, name, passed, detail), filled by the acceptance suite
RESULTS = []


@pytest.fixture
def report():
    def _report(number, name, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  [{number}] {name}: {detail}"
        RESULTS.append((number, name, bool(passed), detail))
        print(line)
        return passed
    return _report


@pytest.fixture(autouse=True)
def _quiet_growth_warning():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="system does not appear")
        yield


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  [{number}] {name}: {detail}")
