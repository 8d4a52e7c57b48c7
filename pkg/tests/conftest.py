"""Shared fixtures and hypothesis configuration."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci",
    deadline=None,
    max_examples=50,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def random_psd(rng):
    """Factory for random symmetric PSD matrices."""

    def make(n, rank=None):
        rank = n if rank is None else rank
        b = rng.normal(size=(n, rank))
        return b @ b.T

    return make
