import pytest

_VERDICTS = {}


@pytest.fixture
def verdict():
    """Record a pass/fail line for an acceptance criterion, then assert it."""
    def start(number):
        _VERDICTS[number] = "FAIL (did not finish)"

        def check(ok, detail):
            _VERDICTS[number] = ("PASS" if ok else "FAIL") + f" {detail}"
            assert ok, f"criterion {number}: {detail}"
        return check
    return start


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_VERDICTS):
        terminalreporter.write_line(f"criterion {number}: {_VERDICTS[number]}")
