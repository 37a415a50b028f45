import os

import pytest
from hypothesis import HealthCheck, settings

from tcsk.grid import TorusGrid
from tcsk.kahler import HermitianFormField

from oracles import cos_field

settings.register_profile(
    "default",
    max_examples=int(os.environ.get("TCSK_HYPOTHESIS_EXAMPLES", 15)),
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def grid1():
    return TorusGrid.square(1, 32)


@pytest.fixture
def grid2():
    return TorusGrid.square(2, 8)


@pytest.fixture
def chi_pert1(grid1):
    return HermitianFormField.identity(grid1, cos_field(grid1, [(0.3, (1, 0))]))
