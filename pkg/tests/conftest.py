import math

import numpy as np
import pytest
from hypothesis import settings

from rdslab.dynamics import Diffeo, Mode, RandomSystem, DrivingMeasure, shear_pair, single_map

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

CAT = [[2, 1], [1, 1]]


@pytest.fixture
def linear_pair():
    return shear_pair(0.0)


@pytest.fixture
def perturbed_pair():
    return shear_pair(0.1)


@pytest.fixture
def cat_system():
    return single_map(CAT)


def dissipative_system(amp=0.05, weight=1.0):
    """Shear with a y-dependent vertical mode, whose Jacobian is 1 + 2 pi amp cos(2 pi y)."""
    f = Diffeo([[1, 1], [0, 1]], [Mode((0, 1), (0.0, amp), 0.0)], name="D")
    if weight == 1.0:
        return RandomSystem([f], DrivingMeasure([(0, 1.0)]))
    g = Diffeo([[1, 0], [1, 1]], name="B")
    return RandomSystem([f, g], DrivingMeasure([(0, weight), (1, 1 - weight)]))
