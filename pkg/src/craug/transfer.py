"""Embedding of the coarse conforming P1 space into the fine CR space."""

import numpy as np
import scipy.linalg as sla

from .assembly import CsrMatrix
from .mesh import MeshError, edge_midpoints

NEST_TOL = 1e-12


def p1_to_cr_embedding(coarse, fine):
    """Matrix ``P`` mapping coarse interior-vertex P1 coefficients to fine CR coefficients.

    ``P[e, v]`` is the coarse hat of vertex ``v`` at the midpoint of fine edge
    ``e``; for a function that is linear along ``e`` this is its edge mean.
    Raises :class:`MeshError` unless every fine edge lies inside one coarse
    triangle.
    """
    ratio = fine.n // coarse.n
    if fine.n % coarse.n or ratio & (ratio - 1):
        raise MeshError(f"fine n={fine.n} is not a power-of-two multiple of coarse n={coarse.n}")
    ends = fine.vertices[fine.edges[fine.free_edges]]  # (m, 2, 2)
    mid = ends.mean(axis=1)
    tri = coarse.locate(mid)
    lam = coarse.barycentric(tri, mid)
    for k in range(2):
        if np.any(coarse.barycentric(tri, ends[:, k]) < -NEST_TOL):
            raise MeshError("fine edge crosses a coarse triangle boundary; meshes are not nested")
    cols = coarse.vertex_dof[coarse.triangles[tri]]
    rows = np.repeat(np.arange(mid.shape[0])[:, None], 3, axis=1)
    lam[np.abs(lam) < NEST_TOL] = 0.0
    keep = (cols >= 0) & (lam != 0.0)
    return CsrMatrix.from_coo(
        rows[keep], cols[keep], lam[keep], (mid.shape[0], coarse.free_vertices.size)
    )


def cr_midpoint_interpolant(mesh, f):
    """CR coefficients equal to ``f`` at interior edge midpoints."""
    p = edge_midpoints(mesh)[mesh.free_edges]
    return np.asarray(f(p[:, 0], p[:, 1]), dtype=np.float64)


class CoarseSpace:
    """The embedded coarse space ``range(P)`` inside the fine CR space.

    Keeps the Cholesky factor ``L`` of ``A_H = P^T A P`` so that the columns of
    ``P L^{-T}`` form an ``a_h``-orthonormal basis without being stored.
    """

    def __init__(self, P, A, M=None):
        self.P = P
        self.A = A
        Ps = P.to_scipy()
        self._Pt = Ps.T.tocsr()
        AH = (self._Pt @ A.to_scipy() @ Ps).toarray()
        try:
            self.L = np.linalg.cholesky(AH)
        except np.linalg.LinAlgError as exc:
            raise MeshError("embedded coarse stiffness is not positive definite") from exc
        self.MH = None if M is None else (self._Pt @ M.to_scipy() @ Ps).toarray()
        self._mcc = None

    @property
    def dim(self):
        return self.L.shape[0]

    def restrict(self, v):
        """``P^T v`` for a vector or block."""
        return self._Pt @ v

    def project_out(self, v):
        """Remove the ``a_h``-orthogonal projection of ``v`` onto ``range(P)``."""
        c = sla.cho_solve((self.L, True), self.restrict(self.A @ v))
        return v - self.P @ c

    def coefficients(self, y):
        """P1 coefficients of the combination ``P L^{-T} y`` of orthonormal coarse columns."""
        return sla.solve_triangular(self.L.T, y, lower=False)

    def orthonormal_coords(self, w):
        """``(P L^{-T})^T w``."""
        return sla.solve_triangular(self.L, self.restrict(w), lower=True)

    def reduced_mass(self, M):
        """``L^{-1} (P^T M P) L^{-T}``, the mass matrix in the orthonormal coarse basis."""
        if self._mcc is None:
            if self.MH is None:
                Ps = self.P.to_scipy()
                self.MH = (self._Pt @ M.to_scipy() @ Ps).toarray()
            T = sla.solve_triangular(self.L, self.MH, lower=True)
            C = sla.solve_triangular(self.L, T.T, lower=True)
            self._mcc = 0.5 * (C + C.T)
        return self._mcc
