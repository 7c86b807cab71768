import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

from trafficdfa import graph  # noqa: E402


@pytest.fixture(scope="session")
def small_net():
    """A 60-node scale-free network shared across tests."""
    return graph.generate_scale_free(60, 3, seed=2)


@pytest.fixture(scope="session")
def path_net():
    """Path graph 0-1-2-3."""
    return graph.Network([[1], [0, 2], [1, 3], [2]])


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
