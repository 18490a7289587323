"""Shared test plumbing.

Acceptance tests record a one-line verdict per criterion; the terminal
summary hook prints them together at the end of the run so the tee'd output
carries an explicit pass/fail line for each criterion.
"""

from contextlib import contextmanager
from types import SimpleNamespace

CRITERION_LINES: list[str] = []


@contextmanager
def criterion(number: int):
    """Record PASS/FAIL (plus a detail line) for one acceptance criterion."""
    box = SimpleNamespace(detail="")
    try:
        yield box
    except BaseException as exc:
        detail = box.detail or f"{type(exc).__name__}: {exc}"
        CRITERION_LINES.append(f"criterion {number} FAIL  {detail}")
        raise
    CRITERION_LINES.append(f"criterion {number} PASS  {box.detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERION_LINES):
            terminalreporter.write_line(line)
