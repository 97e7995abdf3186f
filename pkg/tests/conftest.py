"""Shared fixtures."""

import pytest

from rae_xmc.io.synthetic import make_synthetic_fixture

from .helpers import random_memory


@pytest.fixture
def small_memory():
    return random_memory(0)


@pytest.fixture(scope="session")
def synthetic_fixture():
    return make_synthetic_fixture(seed=0)
