"""Collects one status line per acceptance criterion and prints them at the
end of the run, after pytest's own summary."""

ACCEPTANCE_LINES: dict[int, str] = {}


def record(number: int, line: str) -> None:
    ACCEPTANCE_LINES[number] = line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
