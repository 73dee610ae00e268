import numpy as np
import pytest

from planfactory import kinematics as kin


@pytest.fixture(scope="session")
def chain():
    return kin.default_chain()


@pytest.fixture(scope="session")
def sphere_model():
    return kin.default_sphere_model()


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


def random_config(chain, rng, margin=0.0):
    lim = chain.joint_limits
    return rng.uniform(lim[:, 0] + margin, lim[:, 1] - margin)
