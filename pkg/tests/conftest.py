import numpy as np
import pytest
from hypothesis import settings

from emmviscowave.assembly import assemble_reduced
from emmviscowave.material import EmmMaterial, MaxwellBranch, isotropic
from emmviscowave.mesh import Mesh2D, rect_mesh

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def two_branch():
    return EmmMaterial(1.0, [MaxwellBranch(isotropic(1.0, 1.0), 0.2),
                             MaxwellBranch(isotropic(0.5, 0.5), 0.5)])


def n_branch(n, rng=None):
    """Material with n anisotropic branches (seeded)."""
    from emmviscowave.voigt import random_spd
    rng = np.random.default_rng(7) if rng is None else rng
    return EmmMaterial(1.3, [MaxwellBranch(random_spd(rng, 3, 5.0, 1.0 + j), 0.3 + 0.4 * j) for j in range(n)])


def single_triangle(labels=("D", "D", "D")):
    """Right triangle of area 1."""
    return Mesh2D([[0, 0], [2, 0], [0, 1]], [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]], list(labels))


@pytest.fixture
def material():
    return two_branch()


@pytest.fixture(scope="module")
def ops4():
    return assemble_reduced(rect_mesh(4, 4), two_branch())


@pytest.fixture(scope="module")
def ops8():
    return assemble_reduced(rect_mesh(8, 8), two_branch())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(capsys):
    """Record one PASS/FAIL line per acceptance criterion."""
    def record(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
