from __future__ import annotations

import pytest

from raindrop.profile import assemble_theta
from raindrop.shooting import refine_interval

# filled by test_acceptance.py, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []

A_STAR = 1.4373934532434003


@pytest.fixture(scope="session")
def report():
    return refine_interval()


@pytest.fixture(scope="session")
def profile(report):
    return assemble_theta(report)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
