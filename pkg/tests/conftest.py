import numpy as np
import pytest

from fpcontrol.dynamics import PlatformParams


@pytest.fixture
def params():
    return PlatformParams()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
