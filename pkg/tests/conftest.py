import numpy as np
import pytest

from gbp.graph import from_edges
from gbp.synthetic import erdos_renyi, pair_graph


@pytest.fixture
def pair():
    return pair_graph()


@pytest.fixture
def triangle():
    return from_edges([0, 1, 2], [1, 2, 0], 3)


@pytest.fixture(scope="session")
def er_graph():
    return erdos_renyi(60, 6, np.random.default_rng(11))


def star(leaves: int):
    return from_edges(np.zeros(leaves, dtype=int), np.arange(1, leaves + 1), leaves + 1)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
