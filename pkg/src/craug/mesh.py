"""Structured triangulations of the unit square with edge topology.

Vertices are numbered row by row, ``v = j*(n+1) + i`` for the point
``(i/n, j/n)``. Every cell is cut along its lower-left to upper-right
diagonal. Edges are stored as sorted vertex pairs in lexicographic order,
and local edge ``k`` of a triangle is the edge opposite its local vertex
``k``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TriMesh:
    n: int
    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3), counterclockwise
    edges: np.ndarray  # (ne, 2), smaller index first, lexicographic
    tri_edges: np.ndarray  # (nt, 3), edge opposite local vertex k
    boundary_edge: np.ndarray  # (ne,) bool

    @property
    def h(self):
        """Longest edge length."""
        vec = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return float(np.sqrt((vec**2).sum(axis=1)).max())

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    @property
    def num_edges(self):
        return self.edges.shape[0]

    @cached_property
    def areas(self):
        p = self.vertices[self.triangles]
        u = p[:, 1] - p[:, 0]
        v = p[:, 2] - p[:, 0]
        return 0.5 * (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])

    @cached_property
    def free_edges(self):
        """Indices of interior edges, i.e. the free CR degrees of freedom, ascending."""
        return np.flatnonzero(~self.boundary_edge)

    @cached_property
    def edge_dof(self):
        """Map edge index -> free DOF index, -1 on boundary edges."""
        dof = np.full(self.num_edges, -1, dtype=np.int64)
        dof[self.free_edges] = np.arange(self.free_edges.size)
        return dof

    @cached_property
    def boundary_vertex(self):
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return (x == 0.0) | (x == 1.0) | (y == 0.0) | (y == 1.0)

    @cached_property
    def free_vertices(self):
        return np.flatnonzero(~self.boundary_vertex)

    @cached_property
    def vertex_dof(self):
        dof = np.full(self.num_vertices, -1, dtype=np.int64)
        dof[self.free_vertices] = np.arange(self.free_vertices.size)
        return dof

    def locate(self, points):
        """Triangle index containing each point, by index arithmetic on the grid."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if np.any(pts < -1e-14) or np.any(pts > 1.0 + 1e-14):
            raise MeshError("point outside the unit square")
        n = self.n
        s = pts[:, 0] * n
        t = pts[:, 1] * n
        i = np.clip(np.floor(s).astype(np.int64), 0, n - 1)
        j = np.clip(np.floor(t).astype(np.int64), 0, n - 1)
        upper = (t - j) > (s - i)
        return 2 * (j * n + i) + upper

    def barycentric(self, tri, points):
        """Barycentric coordinates of ``points`` in triangles ``tri``, shape (npts, 3)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        p = self.vertices[self.triangles[tri]]
        u = p[:, 1] - p[:, 0]
        v = p[:, 2] - p[:, 0]
        w = pts - p[:, 0]
        det = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        l1 = (w[:, 0] * v[:, 1] - w[:, 1] * v[:, 0]) / det
        l2 = (u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0]) / det
        return np.stack([1.0 - l1 - l2, l1, l2], axis=1)

    def dump(self, path):
        """Write a plain-text dump: a count header, then vertices, triangles, edges."""
        with open(path, "w") as fh:
            fh.write(f"{self.n} {self.num_vertices} {self.num_triangles} {self.num_edges}\n")
            for x, y in self.vertices:
                fh.write(f"{x:.17g} {y:.17g}\n")
            for a, b, c in self.triangles:
                fh.write(f"{a} {b} {c}\n")
            for (a, b), bnd in zip(self.edges, self.boundary_edge):
                fh.write(f"{a} {b} {int(bnd)}\n")


def _build(n, vertices, triangles):
    local = np.stack(
        [triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]]], axis=1
    ).reshape(-1, 2)
    local = np.sort(local, axis=1)
    edges, inverse, counts = np.unique(local, axis=0, return_inverse=True, return_counts=True)
    tri_edges = inverse.reshape(-1, 3)
    return TriMesh(
        n=n,
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        tri_edges=tri_edges,
        boundary_edge=counts == 1,
    )


def uniform_mesh(n):
    """Uniform criss-cross-free triangulation of the unit square with ``n`` cells per side."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise MeshError(f"subdivision count must be a positive integer, got {n!r}")
    n = int(n)
    g = np.arange(n + 1) / n
    X, Y = np.meshgrid(g, g)
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)
    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return _build(n, vertices, triangles)


def refine_uniform(mesh):
    """Regular refinement: split every triangle into four through its edge midpoints.

    The child is renumbered onto the structured layout of ``uniform_mesh(2n)``
    so that grid point location keeps working; coordinates of the parent
    vertices are reproduced exactly.
    """
    n2 = 2 * mesh.n
    mid = edge_midpoints(mesh)
    coords = np.vstack([mesh.vertices, mid])
    nv = mesh.num_vertices
    m = nv + mesh.tri_edges  # midpoint vertex opposite local vertex k
    a, b, c = mesh.triangles.T
    ma, mb, mc = m.T
    children = np.concatenate(
        [
            np.stack([a, mc, mb], axis=1),
            np.stack([mc, b, ma], axis=1),
            np.stack([mb, ma, c], axis=1),
            np.stack([ma, mb, mc], axis=1),
        ]
    )
    # integer grid labels are exact for dyadic coordinates
    ij = np.rint(coords * n2).astype(np.int64)
    label = ij[:, 1] * (n2 + 1) + ij[:, 0]
    tri = label[children]
    # rotate each triple so its smallest label comes first, as in uniform_mesh
    first = np.argmin(tri, axis=1)
    rot = (first[:, None] + np.arange(3)) % 3
    tri = np.take_along_axis(tri, rot, axis=1)
    # order triangles by (cell, lower/upper); lower has its second vertex on the same row
    cell_j = tri[:, 0] // (n2 + 1)
    cell_i = tri[:, 0] % (n2 + 1)
    is_upper = tri[:, 1] != tri[:, 0] + 1
    key = 2 * (cell_j * n2 + cell_i) + is_upper
    triangles = tri[np.argsort(key, kind="stable")]
    g = np.arange(n2 + 1) / n2
    X, Y = np.meshgrid(g, g)
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)
    vertices[label] = coords
    return _build(n2, vertices, triangles)


def edge_midpoints(mesh):
    return 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
