import pytest

_CRITERIA = []


@pytest.fixture
def record_criterion():
    """Append one PASS/FAIL line to the acceptance summary."""

    def record(number, passed, detail):
        line = f"AC{number}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for _, line in sorted(_CRITERIA):
        terminalreporter.write_line(line)
