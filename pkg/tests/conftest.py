import numpy as np
import pytest

from softbarrier.systems import build_pendulum, build_robot


@pytest.fixture(scope="session")
def pendulum():
    return build_pendulum()


@pytest.fixture(scope="session")
def robot():
    return build_robot()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
