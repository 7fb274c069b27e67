import pytest

from qclab.continuation import QcContractionProfile, plan_endpoint, run_plan
from qclab.potential import LennardJones, compute_profile
from qclab.qc import QcMesh


@pytest.fixture(scope="session")
def lj():
    return LennardJones()


@pytest.fixture(scope="session")
def landmarks(lj):
    return compute_profile(lj)


@pytest.fixture(scope="session")
def mesh773(landmarks):
    return QcMesh.uncoarsened(7, 3, landmarks.a0)


@pytest.fixture(scope="session")
def coarse_mesh(landmarks):
    # nu = 1 through the interface zone, 2- and 3-atom elements outside
    return QcMesh.from_nu([3, 2, 1, 1, 1, 1, 1, 1, 1, 2, 3], K=2, a0=landmarks.a0)


@pytest.fixture(scope="session")
def profile89(lj, landmarks):
    return QcContractionProfile(lj, landmarks, 8.0 / 9.0)


@pytest.fixture(scope="session")
def endpoint_run(mesh773, profile89):
    """The standard continuation experiment: endpoint plan at eps = 1e-6."""
    plan = plan_endpoint(1e-6, 8.0 / 9.0, 0.0, profile89)
    run = run_plan(mesh773, plan, profile89)
    return plan, run


def random_spacings(mesh, rng, amplitude=0.03):
    """Random positive element spacings near the reference spacing."""
    return mesh.a0 * (1.0 + rng.uniform(-amplitude, amplitude, mesh.n_elements))
