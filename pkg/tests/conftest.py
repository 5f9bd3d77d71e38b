import numpy as np
import pytest

from damflow import P_TEST, SCMap, solve_params
from damflow.polygon import random_spec


@pytest.fixture(scope="session")
def p_params():
    return solve_params(P_TEST)


@pytest.fixture(scope="session")
def p_map(p_params):
    return SCMap(p_params)


@pytest.fixture(scope="session")
def random_specs():
    rng = np.random.default_rng(20240611)
    return [random_spec(rng) for _ in range(10)]


@pytest.fixture(scope="session")
def p_oracle(p_params):
    from damflow.sc_oracle import oracle_for

    return oracle_for(P_TEST, p_params)
