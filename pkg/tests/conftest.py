"""Shared test plumbing: the acceptance-criteria summary printer.

Acceptance tests register one PASS/FAIL line each; the lines are printed in
the terminal summary so they survive pytest's output capture.
"""

ACCEPTANCE_LINES = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
