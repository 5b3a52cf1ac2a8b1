"""Symmetric interior quadrature rules on triangles, in barycentric form.

Weights sum to one; multiply by the triangle area.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TriangleRule:
    degree: int
    bary: np.ndarray  # (q, 3)
    weights: np.ndarray  # (q,)

    def points(self, mesh):
        """Physical quadrature points for every triangle, shape (nt, q, 2)."""
        p = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
        return np.einsum("qk,tkd->tqd", self.bary, p)


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)], [w] * 3


def _make(degree, orbits, centroid_weight=None):
    pts, wts = [], []
    if centroid_weight is not None:
        pts.append((1 / 3, 1 / 3, 1 / 3))
        wts.append(centroid_weight)
    for a, w in orbits:
        p, ww = _orbit3(a, w)
        pts += p
        wts += ww
    return TriangleRule(degree, np.array(pts), np.array(wts))


_RULES = {
    2: _make(2, [(1 / 6, 1 / 3)]),
    4: _make(
        4,
        [
            (0.44594849091596488632, 0.22338158967801146570),
            (0.09157621350977074346, 0.10995174365532186764),
        ],
    ),
    5: _make(
        5,
        [
            ((6.0 + np.sqrt(15.0)) / 21.0, (155.0 + np.sqrt(15.0)) / 1200.0),
            ((6.0 - np.sqrt(15.0)) / 21.0, (155.0 - np.sqrt(15.0)) / 1200.0),
        ],
        centroid_weight=9.0 / 40.0,
    ),
}


def triangle_rule(degree):
    """Cheapest available rule exact for polynomials of total ``degree``."""
    for d in sorted(_RULES):
        if d >= degree:
            return _RULES[d]
    raise ValueError(f"no triangle rule of degree {degree}; maximum is {max(_RULES)}")
