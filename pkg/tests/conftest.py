import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from temperedhmc.targets import (
    make_benchmark_bimodal,
    make_donut,
    make_standard_gaussian,
    make_trajectory_bimodal,
)


@pytest.fixture(scope="session")
def bimodal():
    return make_benchmark_bimodal()


@pytest.fixture(scope="session")
def trajectory_bimodal():
    return make_trajectory_bimodal()


@pytest.fixture(scope="session")
def gauss2():
    return make_standard_gaussian(2)


@pytest.fixture(scope="session")
def donut():
    return make_donut()


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
