import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from gauss_solver import StepControl, continue_branch  # noqa: E402
from hyperbolic_core import build_bolza_domain  # noqa: E402
from quad_diff import constant_weight  # noqa: E402
from surface_mesh import build_mesh  # noqa: E402


@pytest.fixture(scope="session")
def domain():
    return build_bolza_domain()


@pytest.fixture(scope="session")
def coarse_mesh(domain):
    return build_mesh(domain, 2)


@pytest.fixture(scope="session")
def mesh3(domain):
    return build_mesh(domain, 3)


@pytest.fixture(scope="session")
def unit_weight(coarse_mesh):
    return constant_weight(coarse_mesh, 1.0)


@pytest.fixture(scope="session")
def unit_branch(coarse_mesh, unit_weight):
    """Full branch for w0 = 1 on the coarse mesh."""
    return continue_branch(coarse_mesh, unit_weight, StepControl())


def upper_root(t, c=1.0):
    return 0.5 * np.log((1.0 + np.sqrt(1.0 - 4.0 * t * t * c)) / 2.0)


def lower_root(t, c=1.0):
    return 0.5 * np.log((1.0 - np.sqrt(1.0 - 4.0 * t * t * c)) / 2.0)
