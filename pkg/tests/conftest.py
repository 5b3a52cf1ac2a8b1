import numpy as np
import pytest

from craug.assembly import assemble_cr, assemble_p1
from craug.augmented import AugmentedProblem
from craug.linalg import reference_eigensolve
from craug.mesh import uniform_mesh


@pytest.fixture(scope="session")
def cr16():
    mesh = uniform_mesh(16)
    A, M = assemble_cr(mesh)
    return mesh, A, M


@pytest.fixture(scope="session")
def cr32():
    mesh = uniform_mesh(32)
    A, M = assemble_cr(mesh)
    return mesh, A, M


@pytest.fixture(scope="session")
def ref16(cr16):
    _, A, M = cr16
    return reference_eigensolve(A, M, 4, tol=1e-12)


@pytest.fixture(scope="session")
def ref32(cr32):
    _, A, M = cr32
    return reference_eigensolve(A, M, 4, tol=1e-12)


@pytest.fixture(scope="session")
def problem_8_32():
    return AugmentedProblem(uniform_mesh(8), uniform_mesh(32))


@pytest.fixture(scope="session")
def problems_128():
    """Nested pairs (coarse_n, 128) sharing one fine assembly, plus the fine reference."""
    fine = uniform_mesh(128)
    A, M = assemble_cr(fine)
    pbs = {n: AugmentedProblem(uniform_mesh(n), fine, A, M) for n in (8, 16, 32)}
    ref = reference_eigensolve(A, M, 4, tol=1e-12)
    return pbs, ref


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
