import math

import numpy as np
import pytest

from censored_evi.core import CensoredSample, make_tail_view

E = math.e


@pytest.fixture
def s4():
    return CensoredSample(np.array([1.0, E, E**2, E**3]), np.array([1, 1, 1, 1]))


@pytest.fixture
def s4c():
    return CensoredSample(np.array([1.0, E, E**2, E**3]), np.array([1, 0, 1, 0]))


@pytest.fixture
def s4_view(s4):
    return make_tail_view(s4, 3)


@pytest.fixture
def five_point():
    return CensoredSample(np.arange(1.0, 6.0), np.array([1, 1, 0, 1, 1]))


def pareto_quantile_sample(n=1000, gamma=0.5):
    """Deterministic quantiles ((n+1)/j)^gamma, all noncensored."""
    z = ((n + 1) / np.arange(1, n + 1)) ** gamma
    return CensoredSample(z, np.ones(n, dtype=int))
