"""Augmented subspace iterations for CR eigenpairs.

Each iteration solves one fine linear system per wanted eigenpair and then a
small eigenproblem on ``W_H + span{iterates}``, where ``W_H`` is the coarse
conforming P1 space embedded by ``P``. The coarse block is kept implicitly as
``P L^{-T}`` (``L L^T = P^T A P``) and the iterate block is made
``a_h``-orthogonal to it, so the reduced stiffness is the identity up to
roundoff.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import RATE_FLOOR, clusters_of, fit_rate
from .assembly import assemble_cr
from .linalg import (
    EigenpairSet,
    EmptyBasisError,
    GEVPError,
    SolverError,
    ah_orthonormalize,
    fix_signs,
    make_inverse,
    pcg_solve,
    ritz_pairs,
)
from .transfer import CoarseSpace, p1_to_cr_embedding


class AugmentedError(SolverError):
    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)
        self.iteration = iteration


class DegenerateBasisError(AugmentedError):
    pass


class AugmentedProblem:
    """Fine CR matrices, the coarse embedding and its factorization for a nested mesh pair."""

    def __init__(self, coarse, fine, A=None, M=None):
        self.coarse_mesh = coarse
        self.fine_mesh = fine
        if A is None or M is None:
            A, M = assemble_cr(fine)
        self.A = A
        self.M = M
        self.P = p1_to_cr_embedding(coarse, fine)
        self.space = CoarseSpace(self.P, A, M)


@dataclass
class AugmentedBasis:
    space: CoarseSpace
    iterates: np.ndarray  # (N, r), a_h-orthonormal and a_h-orthogonal to range(P)
    requested: int = 0
    kept: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def coarse_dim(self):
        return self.space.dim

    @property
    def iterate_dim(self):
        return self.iterates.shape[1]

    @property
    def dim(self):
        return self.coarse_dim + self.iterate_dim

    @property
    def dropped(self):
        return self.requested - self.iterate_dim

    @property
    def columns(self):
        """Dense fine coefficients ``[P L^{-T} | iterates]``; only sensible for small meshes."""
        coarse = self.space.P @ self.space.coefficients(np.eye(self.coarse_dim))
        return np.hstack([coarse, self.iterates])

    def lift(self, Y):
        """Fine coefficients ``B Y`` of reduced coordinates ``Y``."""
        Y = np.asarray(Y, dtype=np.float64)
        c = self.coarse_dim
        out = self.space.P @ self.space.coefficients(Y[:c])
        if self.iterate_dim:
            out = out + self.iterates @ Y[c:]
        return out

    def project(self, W):
        """``B^T W``."""
        top = self.space.orthonormal_coords(W)
        if not self.iterate_dim:
            return top
        return np.concatenate([top, self.iterates.T @ W], axis=0)

    def reduced(self, A, M):
        """Reduced pencil ``(B^T A B, B^T M B)``."""
        cs = self.space
        Mcc = cs.reduced_mass(M)
        r = self.iterate_dim
        if r == 0:
            return np.eye(self.coarse_dim), Mcc
        X = self.iterates
        AX = A @ X
        MX = M @ X
        Acx = cs.orthonormal_coords(AX)
        Mcx = cs.orthonormal_coords(MX)
        Ared = np.block([[np.eye(self.coarse_dim), Acx], [Acx.T, X.T @ AX]])
        Mred = np.block([[Mcc, Mcx], [Mcx.T, X.T @ MX]])
        return 0.5 * (Ared + Ared.T), 0.5 * (Mred + Mred.T)


def build_augmented_basis(P, iterates, A, drop_tol=1e-10, space=None, M=None, strict=False):
    """Condition ``W_H + span(iterates)`` into an ``a_h``-orthonormal basis.

    Iterate columns are ``a_h``-orthogonalized against ``range(P)`` and each
    other (two passes); a column whose remaining norm falls below ``drop_tol``
    times its original norm is dropped. If every iterate is dropped the basis
    is the coarse block alone, or :class:`DegenerateBasisError` is raised when
    ``strict``.
    """
    if space is None:
        space = CoarseSpace(P, A, M)
    X = np.asarray(iterates, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != A.nrows:
        raise ValueError(f"iterates have {X.shape[0]} rows, expected {A.nrows}")
    if X.shape[1] and np.any(np.abs(X).max(axis=0) == 0.0):
        raise ValueError("iterates contain a zero column")
    if X.shape[1] == 0:
        return AugmentedBasis(space, np.zeros((A.nrows, 0)), 0)
    try:
        Q, kept = ah_orthonormalize(X, A, drop_tol, project=space.project_out)
    except EmptyBasisError:
        if strict:
            raise DegenerateBasisError("all iterates lie in the coarse space") from None
        Q, kept = np.zeros((A.nrows, 0)), np.zeros(0, dtype=np.int64)
    return AugmentedBasis(space, Q, X.shape[1], kept)


def _reduced_pairs(A, M, basis, k):
    Ared, Mred = basis.reduced(A, M)
    try:
        return ritz_pairs(Ared, Mred, k), Ared
    except GEVPError as exc:
        raise AugmentedError(f"reduced pencil could not be solved: {exc}") from exc


def solve_augmented_gevp(A, M, basis, k=None, lift=True):
    """Smallest ``k`` Ritz pairs of the fine pencil on the augmented space (all if ``k`` is None).

    With ``lift`` the vectors are fine coefficients normalized to
    ``a_h(u, u) = 1``; otherwise they are reduced coordinates in ``basis``.
    """
    if k is not None and not 1 <= k <= basis.dim:
        raise ValueError(f"k={k} outside [1, {basis.dim}]")
    pairs, _ = _reduced_pairs(A, M, basis, k)
    if not lift:
        return pairs
    U = basis.lift(pairs.vectors)
    U = U / np.sqrt(np.einsum("ij,ij->j", U, A @ U))
    return EigenpairSet(pairs.eigenvalues, fix_signs(U), normalization="a",
                        stats={"dim": basis.dim})


def expansion_solve(A, M, pairs, tol=1e-12, threads=0, solver="pcg", stats=None, inverse=None):
    """Fine solves ``A u_hat_i = lambda_i M u_i``; returns the columns ``u_hat_i``.

    ``solver`` is ``"pcg"`` (Jacobi PCG to relative residual ``tol``, warm
    started from ``u_i``) or ``"direct"``. Independent solves run on
    ``threads`` worker threads when ``threads > 1``.
    """
    lam = np.asarray(pairs.eigenvalues, dtype=np.float64)
    U = np.asarray(pairs.vectors, dtype=np.float64)
    R = (M @ U) * lam
    if solver == "direct":
        inv = inverse if inverse is not None else make_inverse(A, "direct")
        out = inv(R)
        if stats is not None:
            stats.extend([0] * lam.size)
        return np.atleast_2d(out.T).T.reshape(U.shape)

    def one(i):
        if not np.any(R[:, i]):
            return np.zeros(A.nrows), 0
        try:
            res = pcg_solve(A, R[:, i], tol, x0=U[:, i])
        except SolverError as exc:
            raise AugmentedError(f"expansion solve for pair {i + 1} failed: {exc}") from exc
        return res.x, res.iterations

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(lam.size)))
    else:
        results = [one(i) for i in range(lam.size)]
    if stats is not None:
        stats.extend(it for _, it in results)
    return np.column_stack([x for x, _ in results]) if results else np.zeros((A.nrows, 0))


def spectral_projection_error(reference, approx, A, M):
    """Distances of reference vectors to ``span(approx)`` in the ``a_h`` and ``b`` norms.

    The projection is ``a_h``-orthogonal. Returns two arrays indexed like the
    reference columns.
    """
    U = reference.vectors if isinstance(reference, EigenpairSet) else np.asarray(reference)
    X = approx.vectors if isinstance(approx, EigenpairSet) else np.asarray(approx)
    if U.ndim == 1:
        U = U[:, None]
    if X.ndim == 1:
        X = X[:, None]
    AX = A @ X
    G = X.T @ AX
    G = 0.5 * (G + G.T)
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise AugmentedError("approximation columns are linearly dependent") from None
    d = np.diag(L)
    if d.min() <= 1e-7 * d.max():
        raise AugmentedError("approximation Gram matrix is numerically singular")
    C = np.linalg.solve(L.T, np.linalg.solve(L, AX.T @ U))
    D = U - X @ C
    err_a = np.sqrt(np.maximum(np.einsum("ij,ij->j", D, A @ D), 0.0))
    err_b = np.sqrt(np.maximum(np.einsum("ij,ij->j", D, M @ D), 0.0))
    return err_a, err_b


def select_largest_component(pairs, direction, A):
    """Index (0-based) of the pair with the largest ``|a_h(u_j, d)| / ||d||_a``; ties go low."""
    d = np.asarray(direction, dtype=np.float64)
    Ad = A @ d
    nd = float(d @ Ad)
    if not nd > 0.0:
        raise ValueError("direction must be nonzero")
    comps = np.abs(pairs.vectors.T @ Ad) / math.sqrt(nd)
    return int(np.argmax(comps))


@dataclass
class IterationReport:
    """Per-iteration history; row ``l - 1`` belongs to iteration ``l``."""

    targets: list  # 1-based reference indices
    eigenvalues: list = field(default_factory=list)
    err_a: list = field(default_factory=list)
    err_b: list = field(default_factory=list)
    basis_dims: list = field(default_factory=list)
    pcg_iterations: list = field(default_factory=list)
    selected: list = field(default_factory=list)  # Ritz index picked (1-based), one-pair runs only
    switches: list = field(default_factory=list)  # iterations where the pick changed
    converged: bool = False
    rate_a: np.ndarray = None
    rate_b: np.ndarray = None

    @property
    def iterations(self):
        return len(self.eigenvalues)

    def errors(self, norm="a"):
        return np.array(self.err_a if norm == "a" else self.err_b)

    def rows(self):
        for ell, (lam, ea, eb) in enumerate(zip(self.eigenvalues, self.err_a, self.err_b), 1):
            for j, i in enumerate(self.targets):
                yield ell, i, float(lam[j]), float(ea[j]), float(eb[j])

    def finish(self, skip=1, floor=RATE_FLOOR):
        """Fit one contraction rate per target, dropping the first ``skip`` iterations."""
        if not self.err_a:
            self.rate_a = np.full(len(self.targets), np.nan)
            self.rate_b = self.rate_a.copy()
            return self
        ea, eb = self.errors("a"), self.errors("b")
        self.rate_a = np.array([_safe_rate(ea[skip:, j], floor) for j in range(ea.shape[1])])
        self.rate_b = np.array([_safe_rate(eb[skip:, j], floor) for j in range(eb.shape[1])])
        return self


def _safe_rate(errors, floor):
    try:
        return fit_rate(errors, floor)
    except ValueError:
        return float("nan")


def _record(report, pairs, reference, A, M, ref_cols):
    report.eigenvalues.append(np.asarray(pairs.eigenvalues, dtype=np.float64).copy())
    if reference is not None:
        ea, eb = spectral_projection_error(reference.vectors[:, ref_cols], pairs.vectors, A, M)
        report.err_a.append(ea)
        report.err_b.append(eb)


def _changed(prev, cur, A, M, tol):
    ea, _ = spectral_projection_error(cur, prev, A, M)
    return bool(np.all(ea <= tol))


def run_algorithm_k(coarse, fine, k, max_iters=20, tol=1e-10, reference=None, problem=None,
                    solve_tol=1e-12, threads=0, drop_tol=1e-10, solver="pcg"):
    """Augmented subspace iteration for the ``k`` smallest eigenpairs.

    Starts from the coarse P1 eigenpairs embedded by ``P`` and stops after
    ``max_iters`` iterations or once every projection error (or, without a
    reference, the change between successive spans) is at most ``tol``.
    """
    if k < 1:
        raise ValueError("k must be positive")
    pb = problem if problem is not None else AugmentedProblem(coarse, fine)
    A, M = pb.A, pb.M
    inverse = make_inverse(A, "direct") if solver == "direct" else None
    report = IterationReport(targets=list(range(1, k + 1)))
    basis = build_augmented_basis(pb.P, np.zeros((A.nrows, 0)), A, space=pb.space)
    pairs = solve_augmented_gevp(A, M, basis, k)
    report.basis_dims.append(basis.dim)
    _record(report, pairs, reference, A, M, slice(0, k))
    for ell in range(2, max_iters + 1):
        stats = []
        try:
            Uhat = expansion_solve(A, M, pairs, solve_tol, threads, solver, stats, inverse)
            basis = build_augmented_basis(pb.P, Uhat, A, drop_tol, space=pb.space, strict=True)
            new = solve_augmented_gevp(A, M, basis, k)
        except AugmentedError as exc:
            raise type(exc)(str(exc), iteration=ell) from exc
        report.pcg_iterations.append(int(sum(stats)))
        report.basis_dims.append(basis.dim)
        _record(report, new, reference, A, M, slice(0, k))
        if reference is not None:
            done = bool(np.all(report.err_a[-1] <= tol))
        else:
            done = _changed(pairs.vectors, new.vectors, A, M, tol)
        pairs = new
        if done:
            report.converged = True
            break
    report.final = pairs
    return report.finish()


def run_algorithm_one(coarse, fine, target_index, max_iters=20, tol=1e-10, reference=None,
                      problem=None, solve_tol=1e-12, drop_tol=1e-10, solver="pcg"):
    """Augmented subspace iteration for the ``target_index``-th eigenpair (1-based).

    After each expansion solve the Ritz pair with the largest ``a_h`` component
    along the new direction is kept. Errors are distances of the reference
    eigenvector (or, inside a degenerate cluster, of the iterate to the
    reference eigenspace) to the current iterate.
    """
    if target_index < 1:
        raise ValueError("target_index is 1-based and must be positive")
    pb = problem if problem is not None else AugmentedProblem(coarse, fine)
    A, M = pb.A, pb.M
    inverse = make_inverse(A, "direct") if solver == "direct" else None
    t = target_index - 1
    report = IterationReport(targets=[target_index])
    cluster = [t]
    if reference is not None:
        if reference.eigenvalues.size <= t:
            raise ValueError("reference does not contain the target eigenpair")
        cluster = list(next(c for c in clusters_of(reference.eigenvalues) if t in c))

    def record(p):
        report.eigenvalues.append(np.asarray(p.eigenvalues, dtype=np.float64).copy())
        if reference is None:
            return
        if len(cluster) == 1:
            ea, eb = spectral_projection_error(reference.vectors[:, cluster], p.vectors, A, M)
        else:
            ea, eb = spectral_projection_error(p.vectors, reference.vectors[:, cluster], A, M)
        report.err_a.append(ea)
        report.err_b.append(eb)

    basis = build_augmented_basis(pb.P, np.zeros((A.nrows, 0)), A, space=pb.space)
    if basis.dim <= t:
        raise ValueError(f"coarse space has only {basis.dim} eigenpairs")
    init = solve_augmented_gevp(A, M, basis, t + 1)
    pairs = init.take(t + 1)
    pairs = EigenpairSet(pairs.eigenvalues[t:], pairs.vectors[:, t:], normalization="a")
    report.basis_dims.append(basis.dim)
    report.selected.append(target_index)
    record(pairs)
    for ell in range(2, max_iters + 1):
        stats = []
        try:
            uhat = expansion_solve(A, M, pairs, solve_tol, 0, solver, stats, inverse)
            basis = build_augmented_basis(pb.P, uhat, A, drop_tol, space=pb.space, strict=True)
            reduced, Ared = _reduced_pairs(A, M, basis, None)
        except AugmentedError as exc:
            raise type(exc)(str(exc), iteration=ell) from exc
        direction = np.linalg.solve(Ared, basis.project(A @ uhat[:, 0]))
        j = select_largest_component(reduced, direction, Ared)
        u = basis.lift(reduced.vectors[:, j])
        u = u / math.sqrt(float(u @ (A @ u)))
        new = EigenpairSet(reduced.eigenvalues[j:j + 1].copy(), fix_signs(u[:, None]),
                           normalization="a")
        if j + 1 != report.selected[-1]:
            report.switches.append(ell)
        report.selected.append(j + 1)
        report.pcg_iterations.append(int(sum(stats)))
        report.basis_dims.append(basis.dim)
        record(new)
        if reference is not None:
            done = bool(np.all(report.err_a[-1] <= tol))
        else:
            done = _changed(pairs.vectors, new.vectors, A, M, tol)
        pairs = new
        if done:
            report.converged = True
            break
    report.final = pairs
    return report.finish()
