"""Compare the numba and pure-numpy kernel backends on representative inputs.

    python3 benchmarks/bench_kernels.py [--fine-n 128] [--dense-n 400] [--repeat 3]

Each kernel runs once before timing so numba compilation is excluded. The
script also checks that both backends agree.
"""

import argparse
import time

import numpy as np

from craug.assembly import assemble_cr
from craug.kernels import get_backend, numba_available
from craug.mesh import uniform_mesh


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(args):
    mesh = uniform_mesh(args.fine_n)
    A, M = assemble_cr(mesh)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(A.nrows)
    X = rng.standard_normal((A.nrows, 4))
    b = M @ np.ones(A.nrows)
    dinv = 1.0 / A.diagonal()
    B = rng.standard_normal((args.dense_n, args.dense_n))
    C = B @ B.T / args.dense_n
    csr = (A.row_offsets, A.col_indices, A.values)
    xy = np.ascontiguousarray(mesh.vertices)
    tris = np.ascontiguousarray(mesh.triangles, dtype=np.int64)

    def make(k):
        d, e, V = k.householder_tridiagonalize(C)
        ee = np.append(e, 0.0)
        n = d.size
        return {
            "csr_matvec": lambda: k.csr_matvec(*csr, x),
            "csr_matmat (4 cols)": lambda: k.csr_matmat(*csr, X),
            "p1_local_stiffness": lambda: k.p1_local_stiffness(xy, tris),
            "pcg (jacobi, 1e-10)": lambda: k.pcg(*csr, b, np.zeros_like(b), dinv, 1e-10, 2 * A.nrows),
            "householder_tridiagonalize": lambda: k.householder_tridiagonalize(C),
            "tql (values only)": lambda: k.tql(d.copy(), ee.copy(), np.zeros((0, 0)), False),
            "tql (with vectors)": lambda: k.tql(d.copy(), ee.copy(), np.eye(n), True),
            "apply_householder": lambda: k.apply_householder(V, np.eye(n)),
        }

    return make


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--fine-n", type=int, default=128)
    p.add_argument("--dense-n", type=int, default=400)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    make = cases(args)
    names = ["numpy"] + (["numba"] if numba_available() else [])
    table = {name: make(get_backend(name)) for name in names}
    results = {}
    for name in names:
        for kernel, fn in table[name].items():
            results[(name, kernel)] = best_of(fn, args.repeat)

    print(f"fine mesh n={args.fine_n}, dense n={args.dense_n}, best of {args.repeat}")
    print(f"{'kernel':30s} {'numpy [s]':>12s} {'numba [s]':>12s} {'speedup':>9s}")
    for kernel in table["numpy"]:
        tn = results[("numpy", kernel)]
        if "numba" in names:
            tb = results[("numba", kernel)]
            print(f"{kernel:30s} {tn:12.4g} {tb:12.4g} {tn / tb:9.1f}")
        else:
            print(f"{kernel:30s} {tn:12.4g} {'-':>12s} {'-':>9s}")

    if "numba" in names:
        a = table["numpy"]["pcg (jacobi, 1e-10)"]()
        c = table["numba"]["pcg (jacobi, 1e-10)"]()
        print(f"pcg solutions differ by {np.abs(a[0] - c[0]).max():.2e} "
              f"(iterations {a[1]} vs {c[1]})")


if __name__ == "__main__":
    main()
