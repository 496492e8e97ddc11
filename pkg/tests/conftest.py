import functools
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mgqubo.fixtures import make_fixture  # noqa: E402
from mgqubo.formulation import assemble  # noqa: E402
from mgqubo.lowering import lower  # noqa: E402
from mgqubo.solvers import solve_exhaustive  # noqa: E402

import oracles  # noqa: E402

# 3 to 6 nodes, at most 7 branches: lines, stars, rings, the triangle, and
# a few meshed or two-source trees
ORACLE_FIXTURES = [
    "line3", "triangle",
    "line4-0", "line4-1", "line5-0", "line5-1", "line6-0", "line6-1",
    "star4-0", "star4-1", "star5-0", "star5-1", "star6-0", "star6-1",
    "ring4-0", "ring4-1", "ring5-0", "ring5-1", "ring6-0", "ring6-1",
    "tree4-0", "tree6-1", "tree5c1-1", "tree6c1-0", "ring6c1-0",
    "line5s2-1", "tree6s2-0", "tree6s2c1-0",
]


@functools.lru_cache(maxsize=None)
def network(name):
    return make_fixture(name)


@functools.lru_cache(maxsize=None)
def lowered(name):
    return lower(assemble(network(name)))


@functools.lru_cache(maxsize=None)
def ground_states(name):
    return solve_exhaustive(lowered(name))


@functools.lru_cache(maxsize=None)
def oracle_optimum(name):
    return oracles.brute_force_optimum(network(name))


ACCEPTANCE_LINES: list[str] = []


def report(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def line3():
    return make_fixture("line3")


@pytest.fixture
def triangle():
    return make_fixture("triangle")
