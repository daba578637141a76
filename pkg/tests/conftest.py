import pytest

_LINES = []


@pytest.fixture
def report():
    """Record one acceptance line; repeated at the end of the session."""
    def rec(n, ok, detail=""):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        print(line)
        _LINES.append((n, line))
        return ok
    return rec


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)
