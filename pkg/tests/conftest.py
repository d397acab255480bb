import pytest

_ACCEPTANCE = {}


@pytest.fixture
def report():
    """Record one acceptance line: ``report(criterion, passed, detail)``; ``passed=None`` is a skip."""
    def _record(criterion, passed, detail):
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        _ACCEPTANCE[criterion] = (status, detail)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[criterion]
        terminalreporter.write_line(f"criterion {criterion}: {status}  {detail}")
