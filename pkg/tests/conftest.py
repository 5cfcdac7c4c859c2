import numpy as np
import pytest

from coarea_lab.sweep import schedule


@pytest.fixture(scope="session")
def sched4():
    return schedule(4, 16, 0.3)


@pytest.fixture(scope="session")
def tower4(sched4):
    return sched4.tower()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
