"""Solvers for the symmetric positive definite systems and pencils.

``pcg_solve`` handles fine-space linear systems, ``dense_gevp`` the small
projected pencils (Cholesky reduction, Householder tridiagonalization,
implicit QL), and ``reference_eigensolve`` the few smallest eigenpairs of the
fine pencil by a blocked LOBPCG-type iteration.
"""

import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import kernels
from .assembly import CsrMatrix


class SolverError(RuntimeError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class IndefiniteMatrixError(SolverError):
    pass


class GEVPError(SolverError):
    pass


class EmptyBasisError(SolverError):
    pass


DEBUG = os.environ.get("CRAUG_DEBUG", "") not in ("", "0")


@dataclass
class EigenpairSet:
    """Ascending eigenvalues with one coefficient column per eigenpair."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray | None = None
    iterations: int = 0
    normalization: str = "a"
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return self.eigenvalues.size

    @property
    def mu(self):
        return 1.0 / self.eigenvalues

    def take(self, count):
        res = None if self.residuals is None else self.residuals[:count]
        return EigenpairSet(
            self.eigenvalues[:count].copy(),
            self.vectors[:, :count].copy(),
            res,
            self.iterations,
            self.normalization,
            dict(self.stats),
        )


def fix_signs(V):
    """Flip columns so that each column's largest-magnitude entry is positive."""
    V = np.array(V, dtype=np.float64, copy=True)
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


# ----------------------------------------------------------------------------
# conjugate gradients


class PCGResult(NamedTuple):
    x: np.ndarray
    iterations: int
    relres: float


class TwoGridPreconditioner:
    """Symmetric two-grid cycle: damped Jacobi, exact coarse correction through ``P``, damped Jacobi."""

    def __init__(self, A, P, omega=None):
        self.A = A
        self.P = P
        d = A.diagonal()
        self.dinv = 1.0 / d
        if omega is None:
            # Gershgorin bound on the spectrum of D^{-1} A
            rowsum = np.abs(A.to_scipy()).sum(axis=1).A1
            omega = 1.0 / float(np.max(rowsum * self.dinv))
        self.omega = omega
        Ps = P.to_scipy()
        Ac = (Ps.T @ A.to_scipy() @ Ps).toarray()
        self._coarse = sla.cho_factor(Ac)

    def __call__(self, r):
        x = self.omega * self.dinv * r
        rc = self.P.to_scipy().T @ (r - self.A @ x)
        x = x + self.P @ sla.cho_solve(self._coarse, rc)
        x = x + self.omega * self.dinv * (r - self.A @ x)
        return x


def _pcg_python(A, b, x0, precond, tol, maxit):
    x = x0.copy()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0, 0
    r = b - A @ x
    rnorm = float(np.linalg.norm(r))
    if rnorm <= tol * bnorm:
        return x, 0, rnorm / bnorm, 0
    z = precond(r)
    p = z.copy()
    rz = float(r @ z)
    energy = 0.5 * float(x @ (A @ x)) - float(b @ x)
    for it in range(1, maxit + 1):
        q = A @ p
        pq = float(p @ q)
        if pq <= 0.0:
            return x, it, rnorm / bnorm, 2
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        if DEBUG:
            new_energy = 0.5 * float(x @ (A @ x)) - float(b @ x)
            if new_energy > energy + 1e-12 * abs(energy):
                raise SolverError("PCG energy functional increased")
            energy = new_energy
        rnorm = float(np.linalg.norm(r))
        if rnorm <= tol * bnorm:
            return x, it, rnorm / bnorm, 0
        z = precond(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxit, rnorm / bnorm, 1


def pcg_solve(A, rhs, tol=1e-10, max_iters=None, precond="jacobi", x0=None):
    """Solve ``A x = rhs`` for SPD ``A`` until ``||A x - rhs|| <= tol ||rhs||``.

    ``precond`` is ``"jacobi"``, ``"none"`` or a callable ``r -> z``.
    Raises :class:`ConvergenceError` after ``max_iters`` (default ``2n``) and
    :class:`IndefiniteMatrixError` on a direction of non-positive curvature.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = np.ascontiguousarray(rhs, dtype=np.float64)
    n = A.nrows
    if b.shape != (n,):
        raise ValueError(f"rhs has shape {b.shape}, expected ({n},)")
    maxit = 2 * n + 10 if max_iters is None else int(max_iters)
    x0 = np.zeros(n) if x0 is None else np.ascontiguousarray(x0, dtype=np.float64)
    if callable(precond) or DEBUG:
        if precond == "jacobi":
            dinv = 1.0 / A.diagonal()
            fn = lambda r: dinv * r  # noqa: E731
        elif precond == "none":
            fn = lambda r: r.copy()  # noqa: E731
        else:
            fn = precond
        x, it, relres, status = _pcg_python(A, b, x0, fn, tol, maxit)
    else:
        if precond == "jacobi":
            dinv = 1.0 / A.diagonal()
        elif precond == "none":
            dinv = np.ones(n)
        else:
            raise ValueError(f"unknown preconditioner {precond!r}")
        x, it, relres, status = kernels.pcg(
            A.row_offsets, A.col_indices, A.values, b, x0, dinv, float(tol), maxit
        )
    if status == 2:
        raise IndefiniteMatrixError(f"non-positive curvature at PCG iteration {it}")
    if status == 1:
        raise ConvergenceError(
            f"PCG stopped after {it} iterations with relative residual {relres:.3e}",
            iterations=it,
            residual=relres,
        )
    return PCGResult(x, int(it), float(relres))


# ----------------------------------------------------------------------------
# dense generalized eigenproblem


def symmetric_eigh(C, count=None):
    """Eigenpairs of a dense symmetric matrix, ascending; ``count`` smallest if given."""
    C = np.asarray(C, dtype=np.float64)
    n = C.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    scale = float(np.abs(C).max())
    if scale == 0.0:
        return np.zeros(n if count is None else count), np.eye(n)[:, : n if count is None else count]
    d, e, V = kernels.householder_tridiagonalize(C / scale)
    e_ext = np.zeros(n)
    e_ext[: n - 1] = e
    if count is None or 2 * count >= n:
        dd = d.copy()
        Z = np.eye(n)
        if kernels.tql(dd, e_ext, Z, True) < 0:
            raise GEVPError("implicit QL did not converge")
        order = np.argsort(dd, kind="stable")
        k = n if count is None else count
        w = dd[order][:k]
        Y = Z[:, order[:k]]
    else:
        dd = d.copy()
        if kernels.tql(dd, e_ext, np.zeros((0, n)), False) < 0:
            raise GEVPError("implicit QL did not converge")
        w = np.sort(dd)[:count]
        Y = kernels.tridiag_inverse_iteration(d, e, w, np.zeros((n, count)))
    X = kernels.apply_householder(V, Y)
    return w * scale, X


def dense_gevp(A_red, M_red, count=None):
    """Solve ``A x = lambda M x`` for symmetric ``A`` and SPD ``M``.

    Cholesky-reduces to a standard symmetric problem and solves that with
    Householder tridiagonalization and implicit-shift QL. Returns the full
    spectrum (or the ``count`` smallest pairs) with ``M``-orthonormal vectors.
    """
    A_red = np.asarray(A_red, dtype=np.float64)
    M_red = np.asarray(M_red, dtype=np.float64)
    if A_red.ndim != 2 or A_red.shape[0] != A_red.shape[1] or A_red.shape != M_red.shape:
        raise ValueError(f"incompatible pencil shapes {A_red.shape} and {M_red.shape}")
    n = A_red.shape[0]
    if count is not None and not 1 <= count <= n:
        raise ValueError(f"count must lie in [1, {n}]")
    try:
        L = np.linalg.cholesky(0.5 * (M_red + M_red.T))
    except np.linalg.LinAlgError as exc:
        raise GEVPError("reduced mass matrix is not positive definite") from exc
    T = sla.solve_triangular(L, 0.5 * (A_red + A_red.T), lower=True)
    C = sla.solve_triangular(L, T.T, lower=True)
    C = 0.5 * (C + C.T)
    w, Y = symmetric_eigh(C, count)
    X = sla.solve_triangular(L.T, Y, lower=False)
    return EigenpairSet(w, fix_signs(X), normalization="m")


def ritz_pairs(A_red, M_red, count):
    """``count`` smallest Ritz pairs of a pencil whose basis is ``A``-orthonormal.

    Solves the reciprocal pencil ``M y = mu A y`` so that the wanted pairs sit
    at the large end of ``mu``, where the dense solver is most accurate.
    Vectors come back ``A``-orthonormal.
    """
    pairs = dense_gevp(-np.asarray(M_red), A_red, count)
    mu = -pairs.eigenvalues
    return EigenpairSet(1.0 / mu, pairs.vectors, normalization="a")


# ----------------------------------------------------------------------------
# orthonormalization


def ah_orthonormalize(V, A, drop_tol=1e-10, against=None, A_against=None, project=None):
    """Two-pass Gram-Schmidt in the ``A`` inner product with rank-revealing drops.

    Columns whose ``A``-norm after projection falls below ``drop_tol`` times
    their original ``A``-norm are dropped. If ``against`` is given (an
    ``A``-orthonormal block), its span is projected out as well; ``project``
    is an optional callable removing the ``A``-orthogonal projection onto some
    other fixed subspace. Returns the orthonormal columns and the indices of
    the kept input columns.
    """
    V = np.asarray(V, dtype=np.float64)
    if V.ndim == 1:
        V = V[:, None]
    n, m = V.shape
    Q = np.zeros((n, m))
    AQ = np.zeros((n, m))
    kept = []
    if against is not None and against.shape[1]:
        B = np.asarray(against, dtype=np.float64)
        AB = A @ B if A_against is None else A_against
    else:
        B = AB = None
    for j in range(m):
        v = V[:, j].copy()
        Av = A @ v
        orig = math.sqrt(max(float(v @ Av), 0.0))
        if orig == 0.0:
            continue
        r = len(kept)
        for _ in range(2):
            if project is not None:
                v = project(v)
            if B is not None:
                v -= B @ (AB.T @ v)
            if r:
                v -= Q[:, :r] @ (AQ[:, :r].T @ v)
        Av = A @ v
        nrm = math.sqrt(max(float(v @ Av), 0.0))
        if nrm <= drop_tol * orig:
            continue
        Q[:, r] = v / nrm
        AQ[:, r] = Av / nrm
        kept.append(j)
    if not kept:
        raise EmptyBasisError("all columns were dropped as linearly dependent")
    r = len(kept)
    return Q[:, :r], np.array(kept, dtype=np.int64)


# ----------------------------------------------------------------------------
# reference fine-space eigensolver


class _DirectSolver:
    def __init__(self, A):
        self._lu = spla.splu(A.to_scipy().tocsc())

    def __call__(self, R):
        return self._lu.solve(np.asarray(R, dtype=np.float64))


class _PCGSolver:
    def __init__(self, A, tol):
        self.A = A
        self.tol = tol

    def __call__(self, R):
        R = np.atleast_2d(R.T).T
        return np.column_stack([pcg_solve(self.A, R[:, j], self.tol).x for j in range(R.shape[1])])


def make_inverse(A, solver="direct", tol=1e-13):
    """Callable applying ``A^{-1}`` to a vector or block."""
    if solver == "direct":
        return _DirectSolver(A)
    if solver == "pcg":
        return _PCGSolver(A, tol)
    raise ValueError(f"unknown solver {solver!r}")


def _dense_reference(A, M, nwant):
    pairs = dense_gevp(A.toarray(), M.toarray())
    V = pairs.vectors[:, :nwant]
    V = V / np.sqrt(np.einsum("ij,ij->j", V, A @ V))
    return pairs.eigenvalues[:nwant].copy(), V


def reference_eigensolve(
    A, M, count, tol=1e-10, buffer=3, max_iters=300, solver="direct", seed=0
):
    """Smallest eigenpairs of ``A u = lambda M u`` on the fine space.

    Computes ``count + buffer`` pairs with an LOBPCG-type block iteration whose
    preconditioner is ``A^{-1}`` (sparse LU or PCG). Convergence is declared
    when the energy norm of ``A^{-1}(A u - lambda M u)`` is at most ``tol`` for
    the first ``count + 1`` pairs. Small problems go straight to
    :func:`dense_gevp`. Vectors are ``a_h``-orthonormal.
    """
    if count < 1:
        raise ValueError("count must be positive")
    N = A.nrows
    b = min(count + buffer, N)
    need = min(count + 1, b)
    if N <= 400 or 3 * b >= N:
        lam, X = _dense_reference(A, M, b)
        iterations = 0
    else:
        Ainv = make_inverse(A, solver)
        rng = np.random.default_rng(seed)
        X, _ = ah_orthonormalize(rng.standard_normal((N, b)), A)
        if X.shape[1] < b:
            raise SolverError("random start block is rank deficient")
        pairs = ritz_pairs(X.T @ (A @ X), X.T @ (M @ X), b)
        X = X @ pairs.vectors
        lam = pairs.eigenvalues
        P = None
        iterations = 0
        for iterations in range(1, max_iters + 1):
            R = A @ X - (M @ X) * lam
            W = Ainv(R)
            res_a = np.sqrt(np.maximum(np.einsum("ij,ij->j", R, W), 0.0))
            if np.all(res_a[:need] <= tol):
                break
            blocks = [W] if P is None else [W, P]
            Q, _ = ah_orthonormalize(np.hstack(blocks), A, against=X)
            S = np.hstack([X, Q])
            pairs = ritz_pairs(S.T @ (A @ S), S.T @ (M @ S), b)
            Y = pairs.vectors
            lam = pairs.eigenvalues
            P = Q @ Y[b:, :]
            X = S @ Y
        else:
            raise ConvergenceError(
                f"reference eigensolver did not converge in {max_iters} iterations",
                iterations=max_iters,
                residual=float(np.max(res_a[:need])),
            )
        X = X / np.sqrt(np.einsum("ij,ij->j", X, A @ X))
    X = fix_signs(X)
    AX = A @ X
    R = AX - (M @ X) * lam
    residuals = np.linalg.norm(R, axis=0) / np.linalg.norm(AX, axis=0)
    return EigenpairSet(lam, X, residuals, iterations, "a", {"buffer": b - count})
