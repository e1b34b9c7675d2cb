import numpy as np
import pytest

from junctionflow import Control, Hamiltonian, InitialData, JunctionModel, Mesh
from junctionflow.functionals import CostSpec, make_box_weight

T_HORIZON = 6.0
P_SLOPE = -0.8
H_OF_P = -0.16  # H(p) = p (p + 1) at p = -0.8


@pytest.fixture(scope="session")
def quad():
    return Hamiltonian(R=1.0, kind="quadratic", kappa=1.0)


@pytest.fixture(scope="session")
def model(quad):
    return JunctionModel(quad, quad, equal_minima=True)


@pytest.fixture(scope="session")
def u0(model):
    return InitialData((), (P_SLOPE,), capacities=(1.0, 1.0))


@pytest.fixture(scope="session")
def free_flow(model):
    return Control((0.0, T_HORIZON), (model.A0,))


@pytest.fixture(scope="session")
def blocked():
    return Control((0.0, T_HORIZON), (0.0,))


@pytest.fixture(scope="session")
def switching(model):
    """The two-phase control of the canonical box experiment."""
    return Control((0.0, 1.5, T_HORIZON), (0.0, model.A0))


@pytest.fixture(scope="session")
def box():
    return make_box_weight(0.1, 0.18, 1.0, 1.5, 4.5, 5.0, 0.015)


@pytest.fixture(scope="session")
def box_spec(box):
    return CostSpec(box)


@pytest.fixture(scope="session")
def functional_mesh():
    return Mesh.regular(0.08, 0.2, 41, 5.1, 161, tmin=0.9)


def random_control(rng, a0, T=T_HORIZON, cells=5, times=None):
    if times is None:
        times = np.concatenate([[0.0], np.sort(rng.uniform(0.05 * T, 0.95 * T, cells - 1)), [T]])
    values = rng.uniform(a0, 0.0, len(times) - 1)
    return Control(tuple(times), tuple(values))
