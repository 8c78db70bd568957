import numpy as np
import pytest

from mfglab.model import kernel_benchmark, trivial_model
from mfglab.torus import ProbMeasure, TorusGrid


@pytest.fixture(scope="session")
def grid16():
    return TorusGrid(1, 16)


@pytest.fixture(scope="session")
def kernel16(grid16):
    return kernel_benchmark(grid16)


@pytest.fixture(scope="session")
def trivial16(grid16):
    return trivial_model(grid16, 0.7)


def bump(grid, center=0.5, kappa=3.0):
    return ProbMeasure.normalized(grid, np.exp(kappa * np.cos(2 * np.pi * (grid.axis() - center))))
