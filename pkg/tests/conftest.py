import pytest

VERDICTS = []


@pytest.fixture
def verdict():
    """Record one line per acceptance criterion; printed again in the terminal summary."""

    def record(number, title, passed, detail):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        VERDICTS.append(line)
        print(line, flush=True)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
