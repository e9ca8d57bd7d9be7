import math

import numpy as np
import pytest

from lentparticle.config_space import BasePoint, Configuration, MarkedPoint
from lentparticle.marks import CircleMarkSpace


@pytest.fixture
def circle():
    return CircleMarkSpace()


def random_circle_config(rng, n_max=8, n_min=0, horizon=1.0):
    """Random configuration with radius attributes and circle marks."""
    n = int(rng.integers(n_min, n_max + 1))
    pts = [
        MarkedPoint(BasePoint(rng.uniform(0, horizon), rng.uniform(0.05, 2.0)),
                    float(rng.uniform(0, 2 * math.pi)))
        for _ in range(n)
    ]
    return Configuration(tuple(pts), "circle", horizon)


@pytest.fixture
def config_factory():
    return random_circle_config


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
