"""Replays the acceptance criterion verdict lines after the test summary.

The acceptance tests print one `criterion N PASS/FAIL` line each; pytest
captures those on success, so this hook re-emits them where a plain
`pytest -v` run (and anything tee'd from it) will show them.
"""

CRITERION_LINES: list[str] = []


def record_criterion(line: str) -> None:
    CRITERION_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if not CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in CRITERION_LINES:
        terminalreporter.write_line(line)
