import numpy as np
import pytest

import chemolab as cl


@pytest.fixture(scope="session")
def logistic_params():
    """1D logistic demo: f = u*(1-u), g = u, chi = 0.4 on (0, pi)."""
    return cl.build_params(
        {"chi": 0.4, "a": 1, "b": 1, "theta": 2, "kappa": 1, "beta": 1, "dim": 1, "L": np.pi}
    )


@pytest.fixture(scope="session")
def logistic_kinetics(logistic_params):
    return cl.make_kinetics(logistic_params, "generalized-logistic")


@pytest.fixture(scope="session")
def logistic_equilibrium(logistic_kinetics):
    return cl.equilibrium_info(logistic_kinetics, 1.0)
