"""Finite element matrices and vectors on a :class:`~craug.mesh.TriMesh`.

Crouzeix-Raviart functions are linear on each triangle with degrees of
freedom at edge midpoints; the local basis function attached to the edge
opposite vertex ``k`` is ``1 - 2*lambda_k``. Dirichlet conditions are imposed
by dropping boundary edges (CR) or boundary vertices (P1) from the unknowns.
"""

import os
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import kernels
from .quadrature import triangle_rule


class AssemblyError(ValueError):
    pass


DEBUG = os.environ.get("CRAUG_DEBUG", "") not in ("", "0")


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Real sparse matrix in compressed-row storage with sorted, unique columns."""

    nrows: int
    ncols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    @classmethod
    def from_coo(cls, rows, cols, vals, shape):
        indptr, indices, data = kernels.coo_to_csr(rows, cols, vals, shape[0])
        return cls(shape[0], shape[1], indptr, indices, data)

    @classmethod
    def from_scipy(cls, m):
        m = sp.csr_matrix(m)
        m.sum_duplicates()
        m.sort_indices()
        return cls(
            m.shape[0],
            m.shape[1],
            m.indptr.astype(np.int64),
            m.indices.astype(np.int64),
            m.data.astype(np.float64),
        )

    @classmethod
    def diag(cls, d):
        d = np.asarray(d, dtype=np.float64)
        n = d.size
        return cls(n, n, np.arange(n + 1, dtype=np.int64), np.arange(n, dtype=np.int64), d.copy())

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def nnz(self):
        return self.values.size

    def __matmul__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.ncols:
            raise ValueError(f"dimension mismatch: {self.shape} @ {x.shape}")
        if x.ndim == 1:
            return kernels.csr_matvec(self.row_offsets, self.col_indices, self.values, x)
        return kernels.csr_matmat(self.row_offsets, self.col_indices, self.values, x)

    def to_scipy(self):
        return sp.csr_matrix((self.values, self.col_indices, self.row_offsets), shape=self.shape)

    @property
    def T(self):
        return CsrMatrix.from_scipy(self.to_scipy().T)

    def toarray(self):
        return self.to_scipy().toarray()

    def diagonal(self):
        return self.to_scipy().diagonal()

    def row_counts(self):
        return np.diff(self.row_offsets)

    def asymmetry(self):
        """max |a_ij - a_ji| relative to max |a_ij|."""
        s = self.to_scipy()
        scale = np.abs(self.values).max() if self.nnz else 1.0
        diff = abs(s - s.T)
        return (diff.max() if diff.nnz else 0.0) / scale

    def write_matrix_market(self, path):
        scipy.io.mmwrite(path, self.to_scipy())


def barycentric_gradients(mesh):
    """Gradients of the barycentric coordinates, shape (nt, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    area = mesh.areas
    if np.any(area <= 1e-300):
        raise AssemblyError("degenerate or clockwise triangle")
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    rot = np.stack([-e[..., 1], e[..., 0]], axis=-1)
    return rot / (2.0 * area)[:, None, None]


def cr_local_stiffness(mesh):
    """CR element stiffness from the basis gradients ``-2 grad lambda_k``."""
    G = -2.0 * barycentric_gradients(mesh)
    return np.einsum("tid,tjd->tij", G, G) * mesh.areas[:, None, None]


def _p1_local(mesh):
    if np.any(mesh.areas <= 1e-300):
        raise AssemblyError("degenerate or clockwise triangle")
    xy = np.ascontiguousarray(mesh.vertices)
    tris = np.ascontiguousarray(mesh.triangles, dtype=np.int64)
    K, area = kernels.p1_local_stiffness(xy, tris)
    if np.any(area <= 1e-300):
        raise AssemblyError("degenerate or clockwise triangle")
    return K, area


def _scatter(local, dof, size):
    rows = np.repeat(dof, 3, axis=1)
    cols = np.tile(dof, (1, 3))
    vals = local.reshape(len(dof), 9)
    keep = (rows >= 0) & (cols >= 0)
    return CsrMatrix.from_coo(rows[keep], cols[keep], vals[keep], (size, size))


def assemble_cr(mesh):
    """CR stiffness and (diagonal) mass over the interior-edge degrees of freedom."""
    Kp1, area = _p1_local(mesh)
    K = 4.0 * Kp1
    if DEBUG:
        direct = cr_local_stiffness(mesh)
        if not np.allclose(K, direct, rtol=0.0, atol=1e-13 * np.abs(direct).max()):
            raise AssemblyError("CR local stiffness differs from 4x the P1 stiffness")
    dof = mesh.edge_dof[mesh.tri_edges]
    n = mesh.free_edges.size
    A = _scatter(K, dof, n)
    mass = np.zeros(mesh.num_edges)
    np.add.at(mass, mesh.tri_edges.ravel(), np.repeat(area / 3.0, 3))
    M = CsrMatrix.diag(mass[mesh.free_edges])
    return A, M


def assemble_p1(mesh):
    """Conforming P1 stiffness and consistent mass over the interior vertices."""
    K, area = _p1_local(mesh)
    local_mass = (np.ones((3, 3)) + np.eye(3)) / 12.0
    Mloc = area[:, None, None] * local_mass
    dof = mesh.vertex_dof[mesh.triangles]
    n = mesh.free_vertices.size
    return _scatter(K, dof, n), _scatter(Mloc, dof, n)


def _eval_field(f, pts):
    vals = np.asarray(f(pts[..., 0], pts[..., 1]), dtype=np.float64)
    vals = np.broadcast_to(vals, pts.shape[:-1])
    if not np.all(np.isfinite(vals)):
        raise AssemblyError("non-finite field value at a quadrature node")
    return vals


def cr_load_vector(mesh, f, quad_degree=4):
    """Load vector ``(f, phi_e)`` for every interior edge ``e``.

    ``f`` is called as ``f(x, y)`` with arrays of quadrature coordinates.
    """
    if quad_degree < 2:
        raise ValueError("quad_degree must be at least 2")
    rule = triangle_rule(quad_degree)
    fq = _eval_field(f, rule.points(mesh))  # (nt, q)
    phi = 1.0 - 2.0 * rule.bary  # (q, 3)
    local = mesh.areas[:, None] * ((fq * rule.weights) @ phi)
    full = np.zeros(mesh.num_edges)
    np.add.at(full, mesh.tri_edges.ravel(), local.ravel())
    return full[mesh.free_edges]


def cr_gradient_load(mesh, grad_f, quad_degree=4):
    """Broken energy products ``a_h(f, phi_e)`` for a field given by its gradient.

    ``grad_f(x, y)`` returns ``(fx, fy)``.
    """
    rule = triangle_rule(quad_degree)
    pts = rule.points(mesh)
    gx, gy = grad_f(pts[..., 0], pts[..., 1])
    gx = np.broadcast_to(np.asarray(gx, dtype=np.float64), pts.shape[:-1])
    gy = np.broadcast_to(np.asarray(gy, dtype=np.float64), pts.shape[:-1])
    mean = np.stack([gx @ rule.weights, gy @ rule.weights], axis=1) * mesh.areas[:, None]
    G = -2.0 * barycentric_gradients(mesh)
    local = np.einsum("tkd,td->tk", G, mean)
    full = np.zeros(mesh.num_edges)
    np.add.at(full, mesh.tri_edges.ravel(), local.ravel())
    return full[mesh.free_edges]


def cr_local_coefficients(mesh, coeffs):
    """Per-triangle CR coefficients (nt, 3), zero on boundary edges."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape[0] != mesh.free_edges.size:
        raise ValueError(
            f"expected {mesh.free_edges.size} CR coefficients, got {coeffs.shape[0]}"
        )
    full = np.zeros((mesh.num_edges,) + coeffs.shape[1:])
    full[mesh.free_edges] = coeffs
    return full[mesh.tri_edges]


def evaluate_cr(mesh, coeffs, points):
    """Point values of a CR function; each point uses the triangle that contains it."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    tri = mesh.locate(pts)
    lam = mesh.barycentric(tri, pts)
    c = cr_local_coefficients(mesh, coeffs)[tri]
    return np.sum(c * (1.0 - 2.0 * lam), axis=1)
