# tests/conftest.py
import numpy as np
import pytest

from law import ObservedLaw, observables_from_qtable_strong, random_qtable_strong

EXAMPLE1 = ObservedLaw(0.0197, 0.6723, 0.0060, 0.3020, 0.93)
EXAMPLE2 = ObservedLaw(0.57516, 0.13284, 0.07156, 0.22044, 0.734)
TABLE5 = ObservedLaw(0.3, 0.1, 0.3, 0.3, 0.7)
TABLE_S1 = ObservedLaw(0.675, 0.075, 0.025, 0.225, 0.6)


@pytest.fixture
def example1_law():
    return EXAMPLE1


@pytest.fixture
def example2_law():
    return EXAMPLE2


@pytest.fixture
def table5_law():
    return TABLE5


@pytest.fixture
def table_s1_law():
    return TABLE_S1


def random_instances(seed: int, n: int, alpha: float = 1.0):
    """Feasible (q, law, gamma) triples obtained by mapping random q-tables forward."""
    rng = np.random.default_rng(seed)
    for _ in range(n):
        q = random_qtable_strong(rng, alpha)
        law, gamma = observables_from_qtable_strong(q)
        yield q, law, gamma
