import numpy as np
import pytest

from hierakit import TorusGrid
from hierakit.validation import random_marginal, smooth_field


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid4():
    return TorusGrid(1, 4)


@pytest.fixture
def grid8():
    return TorusGrid(1, 8)


@pytest.fixture
def grid16():
    return TorusGrid(1, 16)


def unit_field(grid, rng=None):
    return smooth_field(grid, rng)


def rand_marginal(rng, grid, k, hermitian=True):
    return random_marginal(rng, grid, k, hermitian)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
