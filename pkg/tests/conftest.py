import numpy as np
import pytest
from hypothesis import settings

from magcgo.geometry import build_domain, make_grid

settings.register_profile("magcgo", max_examples=25, deadline=None)
settings.load_profile("magcgo")


@pytest.fixture(scope="session")
def disk():
    return build_domain("disk")


@pytest.fixture(scope="session")
def annulus():
    return build_domain("annulus", 0.3, 1.0)


@pytest.fixture(scope="session")
def disk_grid(disk):
    return make_grid(disk, 2.0 ** -6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
