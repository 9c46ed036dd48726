import numpy as np
import pytest

from numasched.topology import build_topology
from numasched.workload import make_records


@pytest.fixture(scope="session")
def tiny():
    return build_topology(preset="tiny-2n4c")


@pytest.fixture(scope="session")
def skx():
    return build_topology(preset="skx-4s-snc2")


@pytest.fixture(scope="session")
def small_keys():
    return make_records(20_000, seed=1234)
