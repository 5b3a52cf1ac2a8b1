"""Command-line driver for the unit-square experiments; writes CSV files."""

import argparse
import csv
import logging
import os
import sys
from dataclasses import dataclass

import numpy as np

from .analysis import (
    continuum_error,
    energy_products,
    estimate_eta_a,
    exact_eigenpairs_square,
    verify_projection_bounds,
)
from .augmented import AugmentedProblem, run_algorithm_k, run_algorithm_one
from .linalg import SolverError, reference_eigensolve
from .mesh import MeshError, uniform_mesh

log = logging.getLogger("craug")

EXPERIMENTS = ("overall", "algebraic-k", "algebraic-one", "bounds", "eta")
REF_TOL = 1e-12


@dataclass
class ExperimentConfig:
    experiment: str
    coarse_n: int = 8
    fine_n: int = 128
    k: int = 1
    target: int = 1
    max_iters: int = 20
    tol: float = 1e-10
    seed: int = 0
    threads: int = 0
    levels: int = 3
    out: str = "."

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.coarse_n < 1 or self.fine_n < 1:
            raise ValueError("mesh sizes must be positive")
        ratio = self.fine_n // self.coarse_n
        if self.experiment != "bounds" and (
            self.fine_n % self.coarse_n or ratio & (ratio - 1) or ratio < 2
        ):
            raise ValueError("fine-n must be a power-of-two multiple (>= 2) of coarse-n")
        if self.k < 1 or self.target < 1:
            raise ValueError("k and target must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 2:
            raise ValueError("max-iters must be at least 2")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "PASS" if v else "FAIL"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def csv_emit(path, header, rows):
    """Write ``rows`` under ``header`` with 17 significant digits for floats."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    log.info("wrote %s", path)


def _reference(A, M, k, cfg):
    return reference_eigensolve(A, M, k, tol=REF_TOL, seed=cfg.seed)


def run_algebraic(cfg, one=False):
    pb = AugmentedProblem(uniform_mesh(cfg.coarse_n), uniform_mesh(cfg.fine_n))
    count = cfg.target if one else cfg.k
    ref = _reference(pb.A, pb.M, count, cfg)
    if one:
        rep = run_algorithm_one(None, None, cfg.target, cfg.max_iters, cfg.tol, ref, problem=pb)
        if rep.switches:
            log.warning("selected Ritz index changed at iterations %s", rep.switches)
    else:
        rep = run_algorithm_k(None, None, cfg.k, cfg.max_iters, cfg.tol, ref, problem=pb,
                              threads=cfg.threads)
    name = cfg.experiment
    csv_emit(os.path.join(cfg.out, f"{name}.csv"), ["ell", "i", "lambda", "err_a", "err_b"],
             rep.rows())
    csv_emit(os.path.join(cfg.out, f"{name}_rates.csv"), ["i", "rate_a", "rate_b"],
             zip(rep.targets, rep.rate_a, rep.rate_b))
    for i, ra, rb in zip(rep.targets, rep.rate_a, rep.rate_b):
        log.info("i=%d rate_a=%.6g rate_b=%.6g iterations=%d", i, ra, rb, rep.iterations)
    return 0


def run_overall(cfg):
    coarse = uniform_mesh(cfg.coarse_n)
    exact = exact_eigenpairs_square(cfg.k)
    rows = []
    n = 2 * cfg.coarse_n
    while n <= cfg.fine_n:
        fine = uniform_mesh(n)
        pb = AugmentedProblem(coarse, fine)
        ref = _reference(pb.A, pb.M, cfg.k, cfg)
        rep = run_algorithm_k(None, None, cfg.k, cfg.max_iters, cfg.tol, ref, problem=pb,
                              threads=cfg.threads)
        U = rep.final.vectors
        G = U.T @ (pb.A @ U)
        for i, pair in enumerate(exact):
            lam = float(rep.final.eigenvalues[i])
            c = np.linalg.solve(G, energy_products(fine, pair, U))
            ea, eb = continuum_error(fine, U @ c, pair)
            rows.append((n, i + 1, lam, pair.lam, abs(lam - pair.lam), ea, eb))
        log.info("fine_n=%d lambda_1 error=%.3e", n, rows[-cfg.k][4])
        n *= 2
    csv_emit(os.path.join(cfg.out, "overall.csv"),
             ["fine_n", "i", "lambda", "lambda_exact", "eig_err", "err_a", "err_b"], rows)
    return 0


def run_bounds(cfg):
    mesh = uniform_mesh(cfg.fine_n)
    from .assembly import assemble_cr

    A, M = assemble_cr(mesh)
    ref = _reference(A, M, cfg.k, cfg)
    rep = verify_projection_bounds(mesh, cfg.k, ref, A, M, tol=REF_TOL)
    header = ["mesh_n", "i", "k", "lhs_a", "rhs_a", "lhs_b", "rhs_b", "pass"]
    for kind, name in (("k", "bounds.csv"), ("single", "bounds_single.csv")):
        csv_emit(os.path.join(cfg.out, name), header,
                 [(r.mesh_n, r.i, r.k, r.lhs_a, r.rhs_a, r.lhs_b, r.rhs_b, r.passed)
                  for r in rep.rows if r.kind == kind])
    for r in rep.rows:
        if not r.passed:
            log.error("bound violated: %s", r)
    return 0 if rep.passed else 1


def run_eta(cfg):
    fine = uniform_mesh(cfg.fine_n)
    from .assembly import assemble_cr
    from .linalg import make_inverse

    A, M = assemble_cr(fine)
    solve = make_inverse(A, "direct")
    rows = []
    n = cfg.coarse_n
    for _ in range(cfg.levels):
        if n >= cfg.fine_n:
            break
        pb = AugmentedProblem(uniform_mesh(n), fine, A, M)
        eta = estimate_eta_a(A, M, pb.P, solve=solve, seed=cfg.seed, coarse=pb.space)
        rows.append((n, cfg.fine_n, eta))
        log.info("coarse_n=%d eta_a=%.6g", n, eta)
        n *= 2
    csv_emit(os.path.join(cfg.out, "eta.csv"), ["coarse_n", "fine_n", "eta_a"], rows)
    return 0


def run(cfg):
    cfg.validate()
    os.makedirs(cfg.out, exist_ok=True)
    if cfg.experiment == "algebraic-k":
        return run_algebraic(cfg)
    if cfg.experiment == "algebraic-one":
        return run_algebraic(cfg, one=True)
    if cfg.experiment == "overall":
        return run_overall(cfg)
    if cfg.experiment == "bounds":
        return run_bounds(cfg)
    return run_eta(cfg)


def build_parser():
    p = argparse.ArgumentParser(prog="craug", description=__doc__)
    p.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    p.add_argument("--coarse-n", type=int, default=8, help="coarse cells per side (H = sqrt(2)/n)")
    p.add_argument("--fine-n", type=int, default=128, help="fine cells per side (h = sqrt(2)/n)")
    p.add_argument("--k", type=int, default=1, help="number of wanted eigenpairs")
    p.add_argument("--target", type=int, default=1, help="1-based target for algebraic-one")
    p.add_argument("--max-iters", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-10, help="stopping tolerance on err_a")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=0, help="0 = single-threaded")
    p.add_argument("--levels", type=int, default=3, help="coarse levels for eta")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    cfg = ExperimentConfig(
        experiment=args.experiment,
        coarse_n=args.coarse_n,
        fine_n=args.fine_n,
        k=args.k,
        target=args.target,
        max_iters=args.max_iters,
        tol=args.tol,
        seed=args.seed,
        threads=args.threads,
        levels=args.levels,
        out=args.out,
    )
    try:
        return run(cfg)
    except (ValueError, MeshError) as exc:
        print(f"craug: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"craug: cannot write output: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"craug: solver failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
