import numpy as np
import pytest

from kgmp import PhysicsParams, Sphere4Radial, Torus4, build_manifold


@pytest.fixture(scope="session")
def torus():
    return build_manifold(Torus4())


@pytest.fixture(scope="session")
def sphere():
    return build_manifold(Sphere4Radial())


@pytest.fixture(scope="session", params=["torus", "sphere"])
def manifold(request, torus, sphere):
    return torus if request.param == "torus" else sphere


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def params():
    return PhysicsParams(q=1.0, m0=1.0, m1=1.0, omega=0.5, p=4.0)
