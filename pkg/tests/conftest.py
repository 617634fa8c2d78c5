import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from facemorph.meshio import TriangleMesh

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_mesh(rng, n_vertices=1000, n_faces=2000, colors=False, normals=False):
    v = rng.normal(scale=50.0, size=(n_vertices, 3))
    f = np.array([rng.choice(n_vertices, 3, replace=False) for _ in range(n_faces)])
    c = rng.integers(0, 256, (n_vertices, 3), dtype=np.uint8) if colors else None
    n = None
    if normals:
        n = rng.normal(size=(n_vertices, 3))
        n /= np.linalg.norm(n, axis=1, keepdims=True)
    return TriangleMesh(v, f, c, n)


# One line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
