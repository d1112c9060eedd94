"""Shared test configuration: acceptance reporting and hypothesis profile."""

import pytest
from hypothesis import settings

# derandomized so repeated suite runs explore identical examples
settings.register_profile("suite", max_examples=30, deadline=None, derandomize=True)
settings.load_profile("suite")

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Reporter for the acceptance suite: one printed verdict per criterion.

    Each call prints the line immediately, stores it for the terminal
    summary, and asserts, so a failed criterion both shows its verdict and
    fails its test.
    """

    def record(criterion: int, name: str, passed: bool, detail: str = "") -> None:
        verdict = "PASS" if passed else "FAIL"
        line = f"[criterion {criterion}] {verdict} {name}"
        if detail:
            line += f" ({detail})"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
