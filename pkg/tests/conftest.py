import numpy as np
import pytest

from nrl2sm.lut import default_lut
from nrl2sm.tables import default_tables


@pytest.fixture(scope="session")
def tables():
    return default_tables()


@pytest.fixture(scope="session")
def lut():
    return default_lut()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
