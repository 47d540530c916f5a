import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from meanflow.mesh import build_mesh

settings.register_profile(
    "meanflow",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("meanflow")


@pytest.fixture(scope="session")
def torus16():
    return build_mesh("torus", 16)


@pytest.fixture(scope="session")
def torus32():
    return build_mesh("torus", 32)


@pytest.fixture(scope="session")
def torus64():
    return build_mesh("torus", 64)


@pytest.fixture(scope="session")
def torus128():
    return build_mesh("torus", 128)


@pytest.fixture(scope="session")
def sphere16():
    return build_mesh("sphere", (16, 32))


@pytest.fixture(scope="session")
def sphere64():
    return build_mesh("sphere", (64, 128))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
