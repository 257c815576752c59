import numpy as np
import pytest

from qode import MdpModel, random_mdp


@pytest.fixture(scope="session")
def unit_mdp():
    """One state, one action, r = 1, gamma = 0.5 (fixed point 2)."""
    return MdpModel(1, 1, 0.5, np.ones((1, 1, 1)), np.ones((1, 1, 1)), np.ones((1, 1)))


@pytest.fixture(scope="session")
def twin_mdp():
    """One state, two identical actions, r = 1, gamma = 0.5."""
    return MdpModel(1, 2, 0.5, np.ones((1, 2, 1)), np.ones((1, 2, 1)),
                    np.full((1, 2), 0.5))


@pytest.fixture(scope="session")
def mdp53():
    """The committed 5-state 3-action instance."""
    return random_mdp(5, 3, seed=42, gamma=0.9)
