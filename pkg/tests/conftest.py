import os

import hypothesis
import numpy as np
import pytest
from hypothesis import HealthCheck

from poaforge.instance_model import make_instance

hypothesis.settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much])
hypothesis.settings.register_profile("fast", max_examples=8, deadline=None)
hypothesis.settings.register_profile(
    "thorough", max_examples=400, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much])
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def twin():
    """Two-piece twin ceiling with the monopolist at 1."""
    return make_instance([0.0, 0.2, 0.4], [1.0, 1.0], [0.5, 0.7], cond_value="ceiling")


@pytest.fixture
def small_floor():
    """Layered two-piece floor instance with one non-monopoly bidder."""
    return make_instance([0.0, 0.3, 0.6], [1.2, 1.5], [0.7, 0.95],
                         real=[[0.8, 1.0]], cond_value="floor")
