import itertools

import numpy as np
import pytest

from craug.assembly import CsrMatrix
from craug.augmented import (
    AugmentedError,
    DegenerateBasisError,
    build_augmented_basis,
    expansion_solve,
    run_algorithm_k,
    run_algorithm_one,
    select_largest_component,
    solve_augmented_gevp,
    spectral_projection_error,
)
from craug.linalg import EigenpairSet, reference_eigensolve


@pytest.fixture(scope="module")
def ref_8_32(problem_8_32):
    return reference_eigensolve(problem_8_32.A, problem_8_32.M, 4, tol=1e-12)


def _basis(pb, X, **kw):
    return build_augmented_basis(pb.P, X, pb.A, space=pb.space, **kw)


# ---------------------------------------------------------------- basis


def test_basis_dimension(problem_8_32, rng):
    pb = problem_8_32
    basis = _basis(pb, rng.standard_normal(pb.A.nrows))
    assert basis.coarse_dim == 49 and basis.dim == 50 and basis.dropped == 0


def test_basis_gram_identity(problem_8_32, rng):
    pb = problem_8_32
    basis = _basis(pb, rng.standard_normal((pb.A.nrows, 3)))
    B = basis.columns
    np.testing.assert_allclose(B.T @ (pb.A @ B), np.eye(basis.dim), atol=1e-12)
    Ared, Mred = basis.reduced(pb.A, pb.M)
    np.testing.assert_allclose(Ared, np.eye(basis.dim), atol=1e-12)
    np.testing.assert_allclose(Mred, B.T @ (pb.M @ B), atol=1e-15)
    Y = rng.standard_normal((basis.dim, 2))
    np.testing.assert_allclose(basis.lift(Y), B @ Y, atol=1e-12)
    W = rng.standard_normal((pb.A.nrows, 2))
    np.testing.assert_allclose(basis.project(W), B.T @ W, atol=1e-12)


def test_coarse_iterates_dropped(problem_8_32, rng):
    pb = problem_8_32
    inside = pb.P @ rng.standard_normal(pb.space.dim)
    basis = _basis(pb, np.column_stack([inside, rng.standard_normal(pb.A.nrows)]))
    assert basis.iterate_dim == 1 and basis.dropped == 1 and list(basis.kept) == [1]
    only = _basis(pb, inside)
    assert only.dim == 49 and only.dropped == 1
    with pytest.raises(DegenerateBasisError):
        _basis(pb, inside, strict=True)


def test_basis_rejects_bad_input(problem_8_32):
    pb = problem_8_32
    with pytest.raises(ValueError):
        _basis(pb, np.zeros(pb.A.nrows))
    with pytest.raises(ValueError):
        _basis(pb, np.ones(pb.A.nrows + 1))


# ---------------------------------------------------------------- Ritz pairs


def test_exact_when_eigenvectors_included(problem_8_32, ref_8_32):
    pb = problem_8_32
    basis = _basis(pb, ref_8_32.vectors[:, :4])
    pairs = solve_augmented_gevp(pb.A, pb.M, basis, 4)
    lam = ref_8_32.eigenvalues[:4]
    np.testing.assert_allclose(pairs.eigenvalues, lam, rtol=1e-10)
    ea, _ = spectral_projection_error(ref_8_32.vectors[:, :4], pairs.vectors, pb.A, pb.M)
    assert ea.max() <= 1e-8


def test_coarse_ritz_values_bound_from_above(problem_8_32, ref_8_32):
    pb = problem_8_32
    coarse = solve_augmented_gevp(pb.A, pb.M, _basis(pb, np.zeros((pb.A.nrows, 0))), 4)
    assert np.all(coarse.eigenvalues >= ref_8_32.eigenvalues[:4] * (1 - 1e-12))


def test_enlarging_space_lowers_ritz_values(problem_8_32, rng):
    pb = problem_8_32
    small = solve_augmented_gevp(pb.A, pb.M, _basis(pb, rng.standard_normal(pb.A.nrows)), 5)
    X = np.column_stack([small.vectors[:, 0], rng.standard_normal(pb.A.nrows)])
    big = solve_augmented_gevp(pb.A, pb.M, _basis(pb, X), 5)
    assert np.all(big.eigenvalues <= small.eigenvalues * (1 + 1e-12))


def test_gevp_k_range(problem_8_32):
    pb = problem_8_32
    basis = _basis(pb, np.zeros((pb.A.nrows, 0)))
    with pytest.raises(ValueError):
        solve_augmented_gevp(pb.A, pb.M, basis, 50)
    reduced = solve_augmented_gevp(pb.A, pb.M, basis, 2, lift=False)
    assert reduced.vectors.shape == (49, 2)


# ---------------------------------------------------------------- expansion


def test_expansion_fixed_point(problem_8_32, ref_8_32):
    pb = problem_8_32
    pairs = ref_8_32.take(2)
    for solver in ("pcg", "direct"):
        Uhat = expansion_solve(pb.A, pb.M, pairs, 1e-12, solver=solver)
        np.testing.assert_allclose(Uhat, pairs.vectors, atol=1e-8)


def test_expansion_residual_and_threads(problem_8_32, rng):
    pb = problem_8_32
    U = rng.standard_normal((pb.A.nrows, 3))
    pairs = EigenpairSet(np.array([0.0, 3.0, 40.0]), U)
    stats = []
    Uhat = expansion_solve(pb.A, pb.M, pairs, 1e-12, stats=stats)
    assert np.all(Uhat[:, 0] == 0) and stats[0] == 0
    for j in (1, 2):
        rhs = pairs.eigenvalues[j] * (pb.M @ U[:, j])
        assert np.linalg.norm(pb.A @ Uhat[:, j] - rhs) <= 1e-11 * np.linalg.norm(rhs)
    threaded = expansion_solve(pb.A, pb.M, pairs, 1e-12, threads=2)
    np.testing.assert_array_equal(threaded, Uhat)


# ---------------------------------------------------------------- selection


def test_select_examples():
    A = CsrMatrix.diag(np.ones(3))
    pairs = EigenpairSet(np.arange(3.0), np.eye(3))
    assert select_largest_component(pairs, np.array([0.1, 0.9, 0.3]), A) == 1
    assert select_largest_component(pairs, np.array([0.5, -0.5, 0.1]), A) == 0
    assert select_largest_component(pairs, np.array([0.0, 0.2, -0.7]), A) == 2
    with pytest.raises(ValueError):
        select_largest_component(pairs, np.zeros(3), A)


def test_select_brute_force(rng):
    n = 8
    B = rng.standard_normal((n, n))
    Ad = B @ B.T + n * np.eye(n)
    A = CsrMatrix.from_scipy(Ad)
    V = rng.standard_normal((n, 4))
    pairs = EigenpairSet(np.arange(4.0), V)
    for _ in range(20):
        d = rng.standard_normal(n)
        brute = max(range(4), key=lambda j: abs(V[:, j] @ Ad @ d))
        assert select_largest_component(pairs, d, A) == brute


# ---------------------------------------------------------------- projection error


def test_projection_error_examples(problem_8_32, ref_8_32):
    pb = problem_8_32
    U = ref_8_32.vectors[:, :3]
    ea, eb = spectral_projection_error(U[:, [0]], U, pb.A, pb.M)
    assert ea[0] < 1e-12 and eb[0] < 1e-12
    # a_h-orthogonal unit vector: full distance
    ea, eb = spectral_projection_error(U[:, [0]], U[:, [1, 2]], pb.A, pb.M)
    assert ea[0] == pytest.approx(1.0, abs=1e-12)
    assert eb[0] == pytest.approx(np.sqrt(1 / ref_8_32.eigenvalues[0]), rel=1e-10)


def test_projection_error_grid_oracle(rng):
    n = 6
    B = rng.standard_normal((n, n))
    Ad = B @ B.T + np.eye(n)
    A = CsrMatrix.from_scipy(Ad)
    M = CsrMatrix.diag(np.ones(n))
    u = rng.standard_normal(n)
    X = rng.standard_normal((n, 2))
    ea, _ = spectral_projection_error(u, X, A, M)
    c_opt = np.linalg.solve(X.T @ Ad @ X, X.T @ Ad @ u)
    grid = np.linspace(-0.05, 0.05, 41)
    best = min(
        np.sqrt((u - X @ (c_opt + [s, t])) @ Ad @ (u - X @ (c_opt + [s, t])))
        for s, t in itertools.product(grid, grid)
    )
    assert ea[0] == pytest.approx(best, rel=1e-12)
    with pytest.raises(AugmentedError):
        spectral_projection_error(u, np.column_stack([X[:, 0], X[:, 0]]), A, M)


# ---------------------------------------------------------------- iterations


def test_algorithm_k_behaviour(problem_8_32, ref_8_32):
    pb = problem_8_32
    rep = run_algorithm_k(None, None, 2, max_iters=6, tol=1e-14, reference=ref_8_32, problem=pb)
    lam = np.array(rep.eigenvalues)
    ea, eb = rep.errors("a"), rep.errors("b")
    exact = ref_8_32.eigenvalues[:2]
    assert np.all(lam >= exact * (1 - 1e-13))
    assert np.all(np.diff(ea[:, 0]) < 0)
    assert np.all(eb <= ea)
    assert rep.basis_dims == [49] + [51] * (rep.iterations - 1)
    assert len(rep.pcg_iterations) == rep.iterations - 1
    # eigenvalue error is quadratic in the energy error of the vector
    live = ea[:, 0] > 1e-6
    ratio = (lam[live, 0] - exact[0]) / exact[0] / ea[live, 0] ** 2
    assert np.all((ratio > 0.1) & (ratio < 1.5))
    rows = list(rep.rows())
    assert rows[0][:2] == (1, 1) and rows[1][:2] == (1, 2) and len(rows) == 2 * rep.iterations


def test_algorithm_k_stops_on_tolerance(problem_8_32, ref_8_32):
    rep = run_algorithm_k(None, None, 1, max_iters=30, tol=1e-9, reference=ref_8_32,
                          problem=problem_8_32)
    assert rep.converged and rep.iterations < 30 and rep.err_a[-1][0] <= 1e-9
    free = run_algorithm_k(None, None, 1, max_iters=30, tol=1e-9, problem=problem_8_32)
    assert free.converged and not free.err_a
    assert free.final.eigenvalues[0] == pytest.approx(ref_8_32.eigenvalues[0], rel=1e-12)


def test_algorithm_one_cluster_target(problem_8_32, ref_8_32):
    rep = run_algorithm_one(None, None, 2, max_iters=12, tol=1e-14, reference=ref_8_32,
                            problem=problem_8_32)
    assert rep.err_a[-1][0] < 1e-7
    assert rep.selected[0] == 2
    assert rep.eigenvalues[-1][0] == pytest.approx(ref_8_32.eigenvalues[1], rel=1e-10)


def test_argument_errors(problem_8_32, ref_8_32):
    with pytest.raises(ValueError):
        run_algorithm_k(None, None, 0, problem=problem_8_32)
    with pytest.raises(ValueError):
        run_algorithm_one(None, None, 0, problem=problem_8_32)
    with pytest.raises(ValueError):
        run_algorithm_one(None, None, 9, reference=ref_8_32, problem=problem_8_32)


def test_error_carries_iteration():
    exc = AugmentedError("boom", iteration=3)
    assert exc.iteration == 3 and "iteration 3" in str(exc)
