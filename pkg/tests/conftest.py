import numpy as np
import pytest

from copula_forge.io_persistence import data_path, load_mass_table, load_ranks, load_skeleton

# example polynomial and its 2-monotone shift
def f_example(x, y):
    return 2 * x * (1 - y) ** 3 - 3 * (1 - x) ** 3 * y**4


def g_example(x, y):
    return f_example(x, y) + 6 * x * y


# closed-form mixed derivative of the (2, 3) Bernstein polynomial of f_example
def density_closed_form(x, y):
    return -145 / 36 - x / 6 + 97 / 9 * y + 17 / 3 * y**2 - 14 / 3 * x * y - 6 * x * y**2


@pytest.fixture(scope="session")
def toy5_ranks():
    return load_ranks(data_path("toy5"))


@pytest.fixture(scope="session")
def windstorm_ranks():
    return load_ranks(data_path("windstorm_flood"))


@pytest.fixture(scope="session")
def published_10x10():
    return load_skeleton(data_path("windstorm_flood_10x10"))


@pytest.fixture(scope="session")
def published_10x10_masses():
    return load_mass_table(data_path("windstorm_flood_10x10_masses"))


@pytest.fixture(scope="session")
def published_3x4():
    return load_skeleton(data_path("toy5_3x4"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
