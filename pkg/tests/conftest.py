import math

import numpy as np
import pytest

from ledtree.tree import HangingType, build_topology, random_topology

SQRT3 = math.sqrt(3.0)


def three_leaf(leaves):
    # ((A, B), C): X = 0, root = 1, leaves 2, 3, 4
    return HangingType(build_topology([(0, 2, 3), (1, 0, 4)], 3), leaves, ("A", "B", "C"), ("X", "root"))


def four_leaf_balanced(leaves):
    # ((A, B), (C, D)): X = 0, Y = 1, root = 2
    return HangingType(build_topology([(0, 3, 4), (1, 5, 6), (2, 0, 1)], 4), leaves,
                       ("A", "B", "C", "D"), ("X", "Y", "root"))


@pytest.fixture
def isosceles():
    return three_leaf([[-1.0, 0.0], [1.0, 0.0], [0.0, 2.0]])


@pytest.fixture
def square():
    return four_leaf_balanced([[-1.0, 1.0], [-1.0, -1.0], [1.0, 1.0], [1.0, -1.0]])


@pytest.fixture
def collinear():
    return three_leaf([[-2.0, 0.0], [2.0, 0.0], [1.0, 0.0]])


@pytest.fixture
def two_leaf():
    return HangingType(build_topology([(0, 1, 2)], 2), [[-1.0, 0.0], [1.0, 0.0]])


def random_hanging_type(rng, leaves=(3, 6), dim=2):
    n_l = int(rng.integers(leaves[0], leaves[1] + 1))
    return HangingType(random_topology(n_l, rng), rng.uniform(-1.0, 1.0, (n_l, dim)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
