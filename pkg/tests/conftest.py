import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line; printed immediately and again in the terminal summary."""

    def _report(number: int, title: str, passed: bool, detail: str, seconds: float):
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}  [{detail}; {seconds:.2f}s]"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
