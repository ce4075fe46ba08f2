import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def brute_vectors(n):
    """All 0/1 vectors of length n, unit 1 most significant, as plain tuples."""
    return list(itertools.product((0, 1), repeat=n))


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)
