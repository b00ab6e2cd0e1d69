from __future__ import annotations

import pytest

from crowdbid.model import make_instance

EXAMPLE_VALUES = [0.3, 0.2, 0.1, 0.4]
EXAMPLE_PROFILES = [
    [0.2, 0.1, 0.3, 0.4],
    [0.0, 0.8, 0.05, 0.15],
    [0.4, 0.2, 0.0, 0.4],
]
EXAMPLE_BIDS = [10.0, 8.0, 12.0]


def example_instance(budget: float = 20.0):
    return make_instance(EXAMPLE_VALUES, EXAMPLE_PROFILES, EXAMPLE_BIDS, budget,
                         true_costs=EXAMPLE_BIDS)


@pytest.fixture
def example():
    """Three bidders on four sectors and one timestep."""
    return example_instance()


# acceptance tests append "criterion N: PASS/FAIL ..." lines here
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
