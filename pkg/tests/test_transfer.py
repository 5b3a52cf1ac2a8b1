import numpy as np
import pytest

from craug.assembly import assemble_cr, assemble_p1
from craug.mesh import MeshError, edge_midpoints, uniform_mesh
from craug.transfer import CoarseSpace, cr_midpoint_interpolant, p1_to_cr_embedding


def test_same_mesh_hat_values():
    mesh = uniform_mesh(2)
    P = p1_to_cr_embedding(mesh, mesh).toarray()
    assert P.shape == (mesh.free_edges.size, 1)
    mids = edge_midpoints(mesh)[mesh.free_edges]
    row = np.flatnonzero(np.all(np.isclose(mids, [0.5, 0.25]), axis=1))
    assert row.size == 1 and P[row[0], 0] == 0.5
    # six interior edges touch the centre vertex; the two off-centre diagonals do not
    assert sorted(P[:, 0]) == [0.0] * 2 + [0.5] * 6


@pytest.mark.parametrize("nc,nf", [(2, 4), (4, 16), (8, 32)])
def test_embedding_reproduces_linear_functions(nc, nf):
    coarse, fine = uniform_mesh(nc), uniform_mesh(nf)
    P = p1_to_cr_embedding(coarse, fine)
    rng = np.random.default_rng(nc)
    xy = coarse.vertices[coarse.free_vertices]
    v = rng.standard_normal(xy.shape[0])
    # value at a fine midpoint = barycentric blend within the coarse triangle
    mids = edge_midpoints(fine)[fine.free_edges]
    tri = coarse.locate(mids)
    lam = coarse.barycentric(tri, mids)
    full = np.zeros(coarse.vertices.shape[0])
    full[coarse.free_vertices] = v
    expect = np.sum(lam * full[coarse.triangles[tri]], axis=1)
    np.testing.assert_allclose(P @ v, expect, atol=1e-14)


def test_rows_sparse_and_rank():
    coarse, fine = uniform_mesh(4), uniform_mesh(16)
    P = p1_to_cr_embedding(coarse, fine)
    counts = np.diff(P.row_offsets)
    assert counts.max() <= 3
    assert np.all(P.values > 0) and np.all(P.values <= 1)
    assert np.linalg.matrix_rank(P.toarray()) == coarse.free_vertices.size


@pytest.mark.parametrize("nc,nf", [(4, 8), (4, 16), (8, 32)])
def test_galerkin_identities(nc, nf):
    coarse, fine = uniform_mesh(nc), uniform_mesh(nf)
    P = p1_to_cr_embedding(coarse, fine).toarray()
    A, M = assemble_cr(fine)
    AH, _ = assemble_p1(coarse)
    # stiffness is exact for conforming functions
    np.testing.assert_allclose(P.T @ A.toarray() @ P, AH.toarray(), atol=1e-12)


def test_non_nested_rejected():
    with pytest.raises(MeshError):
        p1_to_cr_embedding(uniform_mesh(3), uniform_mesh(8))
    with pytest.raises(MeshError):
        p1_to_cr_embedding(uniform_mesh(4), uniform_mesh(12))


def test_midpoint_interpolant():
    mesh = uniform_mesh(4)
    c = cr_midpoint_interpolant(mesh, lambda x, y: x + 2 * y)
    mids = edge_midpoints(mesh)[mesh.free_edges]
    np.testing.assert_allclose(c, mids[:, 0] + 2 * mids[:, 1])


def test_coarse_space_operations():
    coarse, fine = uniform_mesh(4), uniform_mesh(16)
    A, M = assemble_cr(fine)
    P = p1_to_cr_embedding(coarse, fine)
    S = CoarseSpace(P, A, M)
    assert S.dim == coarse.free_vertices.size
    B = P.toarray() @ np.linalg.inv(S.L.T)
    np.testing.assert_allclose(B.T @ A.toarray() @ B, np.eye(S.dim), atol=1e-12)
    rng = np.random.default_rng(1)
    w = rng.standard_normal(A.nrows)
    r = S.project_out(w)
    np.testing.assert_allclose(P.toarray().T @ (A @ r), 0, atol=1e-10)
    np.testing.assert_allclose(S.orthonormal_coords(w), B.T @ w, atol=1e-12)
    y = rng.standard_normal(S.dim)
    np.testing.assert_allclose(P @ S.coefficients(y), B @ y, atol=1e-12)
    np.testing.assert_allclose(S.reduced_mass(M), B.T @ M.toarray() @ B, atol=1e-14)
