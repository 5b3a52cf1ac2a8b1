import math

import numpy as np
import pytest
import scipy.io
import scipy.linalg as sla

from craug import assembly
from craug.assembly import (
    AssemblyError,
    CsrMatrix,
    assemble_cr,
    assemble_p1,
    cr_gradient_load,
    cr_load_vector,
    cr_local_stiffness,
    evaluate_cr,
)
from craug.kernels import p1_local_stiffness
from craug.linalg import pcg_solve
from craug.mesh import _build, edge_midpoints, uniform_mesh
from craug.quadrature import triangle_rule


@pytest.mark.parametrize("n", [1, 3, 8])
def test_cr_stiffness_is_four_times_p1(n):
    m = uniform_mesh(n)
    K1, _ = p1_local_stiffness(m.vertices, m.triangles)
    np.testing.assert_allclose(cr_local_stiffness(m), 4 * K1, rtol=0, atol=1e-13)


@pytest.mark.parametrize("n", [2, 8, 16])
def test_cr_mass_diagonal_value(n):
    _, M = assemble_cr(uniform_mesh(n))
    assert np.array_equal(M.row_counts(), np.ones(M.nrows, dtype=np.int64))
    np.testing.assert_allclose(M.values, 1.0 / (3 * n * n), rtol=1e-14)


def test_cr_local_mass_orthogonality():
    # (1 - 2 l_i)(1 - 2 l_j) is quadratic, so the degree-2 rule is exact
    rule = triangle_rule(2)
    phi = 1 - 2 * rule.bary
    G = (phi * rule.weights[:, None]).T @ phi
    np.testing.assert_allclose(G, np.eye(3) / 3, atol=1e-15)


def test_symmetry_and_definiteness(rng):
    A, M = assemble_cr(uniform_mesh(8))
    assert A.asymmetry() <= 1e-14
    assert M.asymmetry() == 0.0
    b = rng.standard_normal(A.nrows)
    x = pcg_solve(A, b, 1e-10).x
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)
    assert np.linalg.eigvalsh(A.toarray()).min() > 0


def test_p1_center_node():
    A, M = assemble_p1(uniform_mesh(2))
    assert A.shape == (1, 1)
    assert A.toarray()[0, 0] == pytest.approx(4.0, rel=1e-15)


def test_p1_mass_totals():
    # n = 2: one interior hat, total = int phi^2 = 6 * |K| / 6
    _, M = assemble_p1(uniform_mesh(2))
    assert M.toarray().sum() == pytest.approx(1 / 8, rel=1e-14)
    # without elimination the hats form a partition of unity: entries sum to |Omega|
    m = uniform_mesh(6)
    local = m.areas[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12
    full = assembly._scatter(local, m.triangles, m.num_vertices)
    assert full.values.sum() == pytest.approx(1.0, rel=1e-14)
    _, M6 = assemble_p1(m)
    support = np.any(np.isin(m.triangles, m.free_vertices), axis=1)
    assert 0 < M6.toarray().sum() < m.areas[support].sum()


def test_p1_upper_bound():
    A, M = assemble_p1(uniform_mesh(8))
    w = sla.eigh(A.toarray(), M.toarray(), eigvals_only=True)
    assert w[0] >= 2 * math.pi**2


def test_load_vector_constants():
    m = uniform_mesh(5)
    assert np.all(cr_load_vector(m, lambda x, y: 0 * x) == 0)
    c = 2.5
    r = cr_load_vector(m, lambda x, y: c + 0 * x)
    np.testing.assert_allclose(r, c * 2 * (1 / 50) / 3, rtol=1e-14)


@pytest.mark.parametrize("degree", [2, 4, 5])
def test_load_of_basis_function_is_mass_column(degree):
    m = uniform_mesh(4)
    _, M = assemble_cr(m)
    e = 7
    coeffs = np.zeros(m.free_edges.size)
    coeffs[e] = 1.0
    # piecewise function: evaluate per quadrature point through its own triangle
    rule = triangle_rule(degree)
    loc = assembly.cr_local_coefficients(m, coeffs)
    vals = loc @ (1 - 2 * rule.bary).T  # (nt, q)
    phi = 1 - 2 * rule.bary
    local = m.areas[:, None] * ((vals * rule.weights) @ phi)
    full = np.zeros(m.num_edges)
    np.add.at(full, m.tri_edges.ravel(), local.ravel())
    np.testing.assert_allclose(full[m.free_edges], M.toarray()[:, e], atol=1e-13)


def test_load_rejects_nonfinite_and_low_degree():
    m = uniform_mesh(2)
    with pytest.raises(AssemblyError):
        cr_load_vector(m, lambda x, y: np.full_like(x, np.nan))
    with pytest.raises(ValueError):
        cr_load_vector(m, lambda x, y: x, quad_degree=1)


def test_gradient_load_quadratic():
    m = uniform_mesh(4)
    g = cr_gradient_load(m, lambda x, y: (2 * x, 2 * y))
    cen = m.vertices[m.triangles].mean(axis=1)
    mean_grad = 2 * cen * m.areas[:, None]
    G = -2 * assembly.barycentric_gradients(m)
    local = np.einsum("tkd,td->tk", G, mean_grad)
    full = np.zeros(m.num_edges)
    np.add.at(full, m.tri_edges.ravel(), local.ravel())
    np.testing.assert_allclose(g, full[m.free_edges], atol=1e-14)


def test_evaluate_cr():
    m = uniform_mesh(4)
    nf = m.free_edges.size
    pts = edge_midpoints(m)[m.free_edges]
    assert np.all(evaluate_cr(m, np.zeros(nf), pts) == 0)
    e = 10
    c = np.zeros(nf)
    c[e] = 1.0
    assert evaluate_cr(m, c, pts[e])[0] == pytest.approx(1.0, abs=1e-14)
    edge = m.free_edges[e]
    tri = np.flatnonzero(np.any(m.tri_edges == edge, axis=1))[0]
    others = [x for x in m.tri_edges[tri] if x != edge]
    mids = edge_midpoints(m)[others]
    # push slightly into the triangle so location is unambiguous
    cen = m.vertices[m.triangles[tri]].mean(axis=0)
    mids = mids + 1e-9 * (cen - mids)
    np.testing.assert_allclose(evaluate_cr(m, c, mids), 0.0, atol=1e-8)
    with pytest.raises(ValueError):
        evaluate_cr(m, c, [[2.0, 0.0]])


def test_degenerate_triangle_rejected():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
    tris = np.array([[0, 1, 2], [0, 1, 3]])
    bad = _build(1, verts, tris)
    with pytest.raises(AssemblyError):
        assemble_cr(bad)


def test_debug_check(monkeypatch):
    monkeypatch.setattr(assembly, "DEBUG", True)
    A, _ = assemble_cr(uniform_mesh(4))
    assert A.nrows == 3 * 16 - 8


def test_csr_roundtrip(tmp_path, rng):
    A, _ = assemble_cr(uniform_mesh(3))
    path = tmp_path / "a.mtx"
    A.write_matrix_market(path)
    back = scipy.io.mmread(path).toarray()
    np.testing.assert_allclose(back, A.toarray(), rtol=1e-15)
    x = rng.standard_normal(A.ncols)
    np.testing.assert_allclose(A @ x, A.toarray() @ x, atol=1e-13)
    X = rng.standard_normal((A.ncols, 3))
    np.testing.assert_allclose(A @ X, A.toarray() @ X, atol=1e-13)
    B = CsrMatrix.from_coo(np.array([0, 0, 1]), np.array([1, 1, 0]), np.array([1.0, 2.0, 4.0]), (2, 2))
    np.testing.assert_array_equal(B.toarray(), [[0, 3], [4, 0]])
    with pytest.raises(ValueError):
        A @ np.ones(A.ncols + 1)
