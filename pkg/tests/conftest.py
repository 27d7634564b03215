import pytest

_RESULTS = []


@pytest.fixture
def criterion():
    """Record one acceptance line; call with (number, ok, detail) then assert."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _RESULTS.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_RESULTS):
        terminalreporter.write_line(line)
