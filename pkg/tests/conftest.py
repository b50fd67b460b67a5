import numpy as np
import pytest

from plateau.mmesh import MultiMaterialMesh
from plateau.scenes import DoubleBubbleSpec, make_double_bubble, make_labeled_icosphere, make_y_junction_strip

ACCEPTANCE_LINES = []


def record_acceptance(line: str) -> None:
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def unit_cube() -> MultiMaterialMesh:
    """Unit cube [0,1]^3 as 12 triangles, normals out of region 1."""
    v = np.array([[x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1)], dtype=float)
    quads = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]
    tris = []
    for a, b, c, d in quads:
        tris += [(a, b, c), (a, c, d)]
    return MultiMaterialMesh(v, tris, np.tile([1, 0], (12, 1)), region_count=2)


def random_rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@pytest.fixture(scope="session")
def bubble16():
    return make_double_bubble(DoubleBubbleSpec(16))


@pytest.fixture(scope="session")
def bubble8():
    return make_double_bubble(DoubleBubbleSpec(8))


@pytest.fixture(scope="session")
def ico3():
    return make_labeled_icosphere(1.0, 3)


@pytest.fixture(scope="session")
def ystrip():
    return make_y_junction_strip()


@pytest.fixture
def cube():
    return unit_cube()
