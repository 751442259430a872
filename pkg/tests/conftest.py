import pathlib
import sys

import numpy as np
import pytest

SRC = pathlib.Path(__file__).resolve().parents[1] / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

from romsafe import (FilterGains, circular_obstacle_cbf, double_integrator_system,
                     make_safety_controller, single_integrator_rom)

REPO = pathlib.Path(__file__).resolve().parents[1]
CONFIG_DIR = REPO / "configs"

GOAL = np.array([3.0, 0.0])
OBSTACLE_CENTER = (1.5, 0.0)
OBSTACLE_RADIUS = 0.5


def goal_kappa(y):
    """Smooth proportional goal controller (uncapped)."""
    return GOAL - np.asarray(y, dtype=float)


def goal_kappa_jacobian(y):
    return -np.eye(2)


def capped_goal_kappa(y):
    v = GOAL - np.asarray(y, dtype=float)
    s = float(np.linalg.norm(v))
    return v if s <= 1.0 else v / s


@pytest.fixture(scope="session")
def arena_cbf():
    return circular_obstacle_cbf(OBSTACLE_CENTER, OBSTACLE_RADIUS)


@pytest.fixture(scope="session")
def exact_plant():
    """Double integrator with a smooth controller: every identity is exact."""
    sys, cert = double_integrator_system(2.0, goal_kappa,
                                         kappa_jacobian=goal_kappa_jacobian)
    return sys, cert


@pytest.fixture(scope="session")
def filtered_plant(arena_cbf):
    """Ground-truth configuration: double integrator tracking the filtered
    controller with the gain set whose compatibility margin is 2.5."""
    gains = FilterGains(alpha=1.0, epsilon=2.0, mu=1.0, sigma=None)
    kappa = make_safety_controller(arena_cbf, single_integrator_rom(), gains,
                                   capped_goal_kappa)
    sys, cert = double_integrator_system(2.0, kappa, rho=1.0, beta=1.0)
    return sys, cert, gains, kappa
