"""Collects acceptance verdicts and prints one line per criterion at the end."""

import pytest

VERDICTS = {}


@pytest.fixture
def verdict():
    def record(name, ok, detail=""):
        VERDICTS[name] = (bool(ok), detail)
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(VERDICTS):
        ok, detail = VERDICTS[name]
        terminalreporter.write_line(f"{name} {'PASS' if ok else 'FAIL'}  {detail}")
