import pytest

_RESULTS = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(ok, detail)``."""
    name = request.node.name

    def record(ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _RESULTS.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in _RESULTS:
            terminalreporter.write_line(line)
