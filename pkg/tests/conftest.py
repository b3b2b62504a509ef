import pytest

_RESULTS = {}


@pytest.fixture
def criterion():
    """``criterion(n, name, passed, detail)`` records one acceptance outcome."""

    def record(number, name, passed, detail=""):
        _RESULTS[number] = (name, bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        name, ok, detail = _RESULTS[n]
        line = f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {name}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
