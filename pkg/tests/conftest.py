import numpy as np
import pytest

from fplab.grid import Grid2D
from fplab.fields import sample_vector_field
from fplab.scenarios import hopf_drift


@pytest.fixture(scope="session")
def small_grid():
    return Grid2D(-2.0, 2.0, -2.0, 2.0, 16, 16)


@pytest.fixture(scope="session")
def hopf_grid():
    return Grid2D(-2.5, 2.5, -2.5, 2.5, 100, 100)


@pytest.fixture(scope="session")
def hopf_field(hopf_grid):
    return sample_vector_field(hopf_drift(1.0), hopf_grid)


@pytest.fixture(scope="session")
def radial_u(hopf_grid):
    xx, yy = hopf_grid.centers()
    return xx**2 + yy**2
