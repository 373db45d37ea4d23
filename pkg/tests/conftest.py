import sys
import math

import numpy as np
import pytest

from botlab.config import DEFAULT_OBSERVER, STRAIGHT_OBSERVER, THETA_STAR, preset
from botlab.geometry import build_observer_path, uniform_linear_model
from botlab.noise import IsotropicGaussian, ObservationNoiseSpec
from botlab.sim import Scenario


@pytest.fixture(scope="session")
def model():
    return uniform_linear_model(20.0)


@pytest.fixture(scope="session")
def path():
    return build_observer_path(DEFAULT_OBSERVER)


@pytest.fixture(scope="session")
def straight_path():
    return build_observer_path(STRAIGHT_OBSERVER)


@pytest.fixture(scope="session")
def theta_star():
    return np.array(THETA_STAR)


@pytest.fixture(scope="session")
def iso_scenario():
    return preset("isotropic")[0]


@pytest.fixture(scope="session")
def small_scenario(model, path, theta_star):
    """Cheap variant of the isotropic scenario for estimator tests."""
    return Scenario(model, theta_star, path, IsotropicGaussian(0.01), ObservationNoiseSpec(1e-3), n=400)


def random_theta(rng, theta_star, scale=(0.3, 0.02, 0.3, 0.02)):
    return theta_star + rng.uniform(-1, 1, 4) * np.asarray(scale)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.verdict_lines():
        terminalreporter.write_line(line)
