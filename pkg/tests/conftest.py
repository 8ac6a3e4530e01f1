import numpy as np
import pytest

from mecalloc import Allocation, SolveConfig
from mecalloc.scenario import GenParams, generate


@pytest.fixture(scope="session")
def scenario42():
    return generate(GenParams(seed=42))


@pytest.fixture(scope="session")
def cfg42(scenario42):
    return SolveConfig.for_scenario(scenario42)


@pytest.fixture(scope="session")
def equal_allocation42(scenario42):
    """Everything split evenly: data over APs, bandwidth over pairs,
    each AP's capacity over all users."""
    sc = scenario42
    K, M = sc.num_users, sc.num_aps
    return Allocation(
        data=np.tile(sc.task_bits[:, None] / M, (1, M)),
        bandwidth=np.full((K, M), sc.bandwidth_hz / (K * M)),
        compute=np.tile((sc.compute_capacity / K)[None, :], (K, 1)),
    )
