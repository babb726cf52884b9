import copy

import pytest

from nrsim.core_model import UeProfile

from .factories import MINIMAL_SCENARIO, make_profile


@pytest.fixture
def minimal_scenario() -> dict:
    """A fresh copy of the smallest valid scenario: one cell, one idle UE."""
    return copy.deepcopy(MINIMAL_SCENARIO)


@pytest.fixture
def profile() -> UeProfile:
    return make_profile()
