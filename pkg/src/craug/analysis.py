"""Continuum reference data, error norms and the a priori bound checks.

Exact eigenpairs of the Dirichlet Laplacian on the unit square are
``u = c sin(m pi x) sin(n pi y)`` with ``lambda = (m^2 + n^2) pi^2``; the
amplitude ``c = 2/sqrt(lambda)`` makes the energy norm one. Exact data enters
discrete quantities only through quadrature-evaluated load vectors.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_cr, barycentric_gradients, cr_gradient_load, cr_load_vector, cr_local_coefficients
from .linalg import SolverError, pcg_solve
from .quadrature import triangle_rule
from .transfer import CoarseSpace

EPS = np.finfo(float).eps
RATE_FLOOR = 1e3 * EPS


class BoundViolation(AssertionError):
    pass


@dataclass(frozen=True)
class ContinuumEigenpair:
    m: int
    n: int

    @property
    def lam(self):
        return (self.m**2 + self.n**2) * math.pi**2

    @property
    def amplitude(self):
        return 2.0 / math.sqrt(self.lam)

    @property
    def norm_b(self):
        return 1.0 / math.sqrt(self.lam)

    def __call__(self, x, y):
        return self.amplitude * np.sin(self.m * np.pi * x) * np.sin(self.n * np.pi * y)

    def grad(self, x, y):
        c = self.amplitude * np.pi
        sx, cx = np.sin(self.m * np.pi * x), np.cos(self.m * np.pi * x)
        sy, cy = np.sin(self.n * np.pi * y), np.cos(self.n * np.pi * y)
        return c * self.m * cx * sy, c * self.n * sx * cy


def exact_eigenpairs_square(count):
    """The ``count`` smallest eigenpairs, sorted by eigenvalue then ``(m, n)``."""
    if count < 1:
        raise ValueError("count must be positive")
    modes = [(m * m + n * n, m, n) for m in range(1, count + 1) for n in range(1, count + 1)]
    modes.sort()
    return [ContinuumEigenpair(m, n) for _, m, n in modes[:count]]


def fe_projection(mesh, pair, tol=1e-12, A=None, quad_degree=4, load=None):
    """Coefficients of the discrete projection solving ``a_h(x, v) = lambda b(u, v)``."""
    if A is None:
        A, _ = assemble_cr(mesh)
    r = cr_load_vector(mesh, pair, quad_degree) if load is None else load
    return pcg_solve(A, pair.lam * r, tol).x


def continuum_error(mesh, coeffs, pair, quad_degree=4):
    """Broken energy and L2 distances between the exact ``pair`` and a CR function."""
    rule = triangle_rule(quad_degree)
    c = cr_local_coefficients(mesh, coeffs)  # (nt, 3)
    G = -2.0 * barycentric_gradients(mesh)  # (nt, 3, 2)
    grad_h = np.einsum("tk,tkd->td", c, G)
    pts = rule.points(mesh)
    uq = pair(pts[..., 0], pts[..., 1])
    gx, gy = pair.grad(pts[..., 0], pts[..., 1])
    uh = c @ (1.0 - 2.0 * rule.bary).T  # (nt, q)
    w = mesh.areas[:, None] * rule.weights
    ea = np.sum(w * ((gx - grad_h[:, None, 0]) ** 2 + (gy - grad_h[:, None, 1]) ** 2))
    eb = np.sum(w * (uq - uh) ** 2)
    return math.sqrt(ea), math.sqrt(eb)


def energy_products(mesh, pair, vectors, quad_degree=4):
    """``a_h(u, v_j)`` for each column ``v_j``."""
    g = cr_gradient_load(mesh, pair.grad, quad_degree)
    return g @ vectors


@dataclass
class StrangCheck:
    residual: float  # max of scaled and resolved-relative residuals
    scaled: np.ndarray  # |L - R| / (|L| + |R| + S)
    relative: np.ndarray  # |L - R| / (|L| + |R|), NaN where unresolved
    lhs: np.ndarray
    rhs: np.ndarray
    scale: np.ndarray


RESOLVED = 1e-6


def verify_strang_identity(mesh, pair, reference, A=None, M=None, tol=1e-12, quad_degree=4):
    """Check ``(lb_j - lam) b(x, u_j) = lam b(u - x, u_j)`` with ``x`` the discrete projection.

    ``S_j = (lb_j + lam) ||x||_b ||u_j||_b`` bounds every term of the identity
    before cancellation. Components whose sides are below ``RESOLVED * S_j``
    (zero by symmetry, so pure roundoff) are judged against ``S_j`` only; the
    others must also satisfy the identity in plain relative terms.
    """
    if A is None or M is None:
        A, M = assemble_cr(mesh)
    r = cr_load_vector(mesh, pair, quad_degree)
    x = fe_projection(mesh, pair, tol, A, load=r)
    lam = pair.lam
    U = reference.vectors
    bxu = U.T @ (M @ x)
    bu = U.T @ r
    lb = reference.eigenvalues
    lhs = (lb - lam) * bxu
    rhs = lam * bu - lam * bxu
    nx = math.sqrt(float(x @ (M @ x)))
    nu = np.sqrt(np.einsum("ij,ij->j", U, M @ U))
    scale = (lb + lam) * nx * nu
    diff = np.abs(lhs - rhs)
    size = np.abs(lhs) + np.abs(rhs)
    scaled = diff / (size + scale + 1e-300)
    relative = np.where(size >= RESOLVED * scale, diff / (size + 1e-300), np.nan)
    worst = max(float(scaled.max()), float(np.nanmax(relative, initial=0.0)))
    return StrangCheck(worst, scaled, relative, lhs, rhs, scale)


@dataclass
class GapData:
    k: int
    mu: np.ndarray  # exact 1/lambda_i, i <= k
    mu_bar: np.ndarray  # discrete 1/lambda_bar_j for all available j
    delta_k: np.ndarray  # min_{k<j} |mu_bar_j - mu_i|
    delta_lambda: np.ndarray  # min_{j not in cluster(i)} |mu_bar_j - mu_i|
    clusters: list = field(default_factory=list)  # tuples of 0-based indices
    degenerate: np.ndarray = None  # per-vector gap collapses


def clusters_of(values, rtol=1e-8):
    """Group consecutive (sorted) values that agree to ``rtol``; returns index tuples."""
    groups, cur = [], [0]
    for j in range(1, len(values)):
        if abs(values[j] - values[cur[0]]) <= rtol * abs(values[cur[0]]):
            cur.append(j)
        else:
            groups.append(tuple(cur))
            cur = [j]
    groups.append(tuple(cur))
    return groups


def gap_data(reference, targets, k):
    """Reciprocal eigenvalue gaps for the targets ``u_1..u_k`` (listed in ``targets``)."""
    lb = np.asarray(reference.eigenvalues)
    if lb.size < k + 1:
        raise ValueError(f"need at least {k + 1} discrete eigenvalues, have {lb.size}")
    lam = np.array([t.lam for t in targets[:k]])
    mu = 1.0 / lam
    mu_bar = 1.0 / lb
    dk = np.abs(mu_bar[k:, None] - mu[None, :])
    if np.any(np.argmin(dk, axis=0) != 0):
        raise ValueError("reciprocal gap is not attained at j = k+1")
    delta_k = dk.min(axis=0)
    clusters = clusters_of(lam)
    delta_lambda = np.empty(k)
    degenerate = np.zeros(k, dtype=bool)
    for cl in clusters:
        others = np.setdiff1d(np.arange(lb.size), cl)
        for i in cl:
            delta_lambda[i] = np.abs(mu_bar[others] - mu[i]).min()
            degenerate[i] = len(cl) > 1
    return GapData(k, mu, mu_bar, delta_k, delta_lambda, clusters, degenerate)


@dataclass
class BoundRow:
    mesh_n: int
    i: int  # 1-based target index (first index of a cluster)
    k: int  # dimension of the projected discrete space
    lhs_a: float
    rhs_a: float
    lhs_b: float
    rhs_b: float
    delta: float
    mu_bar: float
    proj_a: float
    proj_b: float
    kind: str  # "k" for the span of the first k pairs, "single" for one eigenspace

    @property
    def passed(self):
        return self.lhs_a <= self.rhs_a and self.lhs_b <= self.rhs_b


@dataclass
class BoundReport:
    rows: list
    gaps: GapData

    @property
    def passed(self):
        return all(r.passed for r in self.rows)


def _projection_error(mesh, pair, U, quad_degree):
    # U a_h-orthonormal: the a_h projection has coefficients a_h(u, U_j)
    c = energy_products(mesh, pair, U, quad_degree)
    return continuum_error(mesh, U @ c, pair, quad_degree)


def verify_projection_bounds(mesh, k, reference=None, A=None, M=None, tol=1e-12, quad_degree=4,
                             raise_on_violation=False):
    """Evaluate both sides of the explicit projection bounds for ``u_1..u_k``.

    Rows of kind ``"k"`` project onto the span of the first ``k`` discrete
    eigenvectors; rows of kind ``"single"`` project onto the discrete
    eigenspace of one target (both vectors of a degenerate pair together),
    with the gap taken to eigenvalues outside the cluster.
    """
    from .linalg import reference_eigensolve

    if A is None or M is None:
        A, M = assemble_cr(mesh)
    if reference is None:
        reference = reference_eigensolve(A, M, k, tol=tol)
    targets = exact_eigenpairs_square(k)
    gaps = gap_data(reference, targets, k)
    U = reference.vectors
    rows = []
    proj = [continuum_error(mesh, fe_projection(mesh, t, tol, A, quad_degree), t, quad_degree)
            for t in targets]
    mu_k1 = gaps.mu_bar[k]
    for i, t in enumerate(targets):
        pa, pb = proj[i]
        la, lb = _projection_error(mesh, t, U[:, :k], quad_degree)
        d = gaps.delta_k[i]
        rows.append(BoundRow(mesh.n, i + 1, k, la, 2 * pa + math.sqrt(mu_k1) / d * pb,
                             lb, (2 + mu_k1 / d) * pb, d, mu_k1, pa, pb, "k"))
    mu_1 = gaps.mu_bar[0]
    for cl in gaps.clusters:
        for i in cl:
            t = targets[i]
            pa, pb = proj[i]
            la, lb = _projection_error(mesh, t, U[:, list(cl)], quad_degree)
            d = gaps.delta_lambda[i]
            rows.append(BoundRow(mesh.n, i + 1, len(cl), la, 2 * pa + math.sqrt(mu_1) / d * pb,
                                 lb, (2 + mu_1 / d) * pb, d, mu_1, pa, pb, "single"))
    report = BoundReport(rows, gaps)
    if raise_on_violation and not report.passed:
        bad = [r for r in rows if not r.passed]
        raise BoundViolation(f"projection bound violated: {bad}")
    return report


def estimate_eta_a(A, M, P, iters=200, rtol=1e-4, solve=None, seed=0, coarse=None):
    """Power-iteration estimate of the best-approximation constant of ``range(P)``.

    Returns the largest singular value of ``f -> (I - Q) A^{-1} M f`` from the
    ``b`` norm to the ``a_h`` norm, with ``Q`` the ``a_h``-orthogonal projection
    onto ``range(P)``. ``solve`` applies ``A^{-1}`` to a vector (sparse LU by
    default).
    """
    from .linalg import make_inverse

    if solve is None:
        solve = make_inverse(A, "direct")
    cs = CoarseSpace(P, A) if coarse is None else coarse
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(A.nrows)
    f /= math.sqrt(float(f @ (M @ f)))
    prev = sigma2 = 0.0
    for it in range(1, iters + 1):
        Mf = M @ f
        w = cs.project_out(solve(Mf))
        # (I - Q) T is a_h-self-adjoint on the M-weighted space: <f, g>_b with g = w
        sigma2 = float(w @ Mf)
        g = w / math.sqrt(max(float(w @ (M @ w)), 1e-300))
        if it > 1 and abs(sigma2 - prev) <= rtol * sigma2:
            return math.sqrt(sigma2)
        prev = sigma2
        f = g
    raise SolverError(
        f"eta estimate did not settle in {iters} iterations (last ratio {sigma2 / prev:.6f})"
    )


def fit_rate(errors, floor=RATE_FLOOR):
    """Geometric mean of successive error ratios, ignoring entries below ``floor``."""
    e = np.asarray(errors, dtype=np.float64)
    ok = e >= floor
    # stop at the first entry that falls under the floor
    if not ok.all():
        e = e[: np.argmin(ok)]
    if e.size < 3:
        raise ValueError(f"need at least 3 admissible entries, have {e.size}")
    return float(np.exp(np.mean(np.log(e[1:] / e[:-1]))))


def rayleigh_quotient(A, M, v):
    v = np.asarray(v, dtype=np.float64)
    den = float(v @ (M @ v))
    if den == 0.0:
        raise ValueError("zero vector has no Rayleigh quotient")
    return float(v @ (A @ v)) / den
