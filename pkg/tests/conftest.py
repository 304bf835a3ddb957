import numpy as np
import pytest

from gridscen.network import bundled_network


@pytest.fixture(scope="session")
def case9():
    return bundled_network("case9")


@pytest.fixture(scope="session")
def case39():
    return bundled_network("case39")


@pytest.fixture()
def rng():
    return np.random.default_rng(20260823)
