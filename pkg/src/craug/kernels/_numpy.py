"""Pure-numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_numba``; the
two are interchangeable and are compared against each other in the tests.
"""

import math

import numpy as np

EPS = np.finfo(np.float64).eps
SAFMIN = np.finfo(np.float64).tiny


def coo_to_csr(rows, cols, vals, nrows):
    """Sum duplicates and return ``(indptr, indices, data)`` with sorted columns."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    order = np.lexsort((cols, rows))
    r, c, v = rows[order], cols[order], vals[order]
    if r.size == 0:
        return np.zeros(nrows + 1, np.int64), np.zeros(0, np.int64), np.zeros(0)
    new = np.empty(r.size, dtype=bool)
    new[0] = True
    new[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
    starts = np.flatnonzero(new)
    data = np.add.reduceat(v, starts)
    indices = c[starts]
    counts = np.bincount(r[starts], minlength=nrows)
    indptr = np.zeros(nrows + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, indices, data


def csr_matvec(indptr, indices, data, x):
    nrows = indptr.size - 1
    prod = data * x[indices]
    y = np.zeros(nrows)
    lengths = np.diff(indptr)
    nz = lengths > 0
    if prod.size:
        y[nz] = np.add.reduceat(prod, indptr[:-1][nz])
    return y


def csr_matmat(indptr, indices, data, X):
    nrows = indptr.size - 1
    prod = data[:, None] * X[indices, :]
    Y = np.zeros((nrows, X.shape[1]))
    nz = np.diff(indptr) > 0
    if prod.shape[0]:
        Y[nz] = np.add.reduceat(prod, indptr[:-1][nz], axis=0)
    return Y


def p1_local_stiffness(xy, tris):
    """Element stiffness of linear Lagrange elements, shape (ntri, 3, 3), and areas."""
    p0 = xy[tris[:, 0]]
    p1 = xy[tris[:, 1]]
    p2 = xy[tris[:, 2]]
    # edge vectors opposite each vertex
    e0 = p2 - p1
    e1 = p0 - p2
    e2 = p1 - p0
    area = 0.5 * (e2[:, 0] * (-e1[:, 1]) - e2[:, 1] * (-e1[:, 0]))
    E = np.stack([e0, e1, e2], axis=1)
    K = np.einsum("tid,tjd->tij", E, E) / (4.0 * area)[:, None, None]
    return K, area


def pcg(indptr, indices, data, b, x0, dinv, tol, maxit):
    """Jacobi-preconditioned CG. Returns ``(x, iterations, relres, status)``.

    status: 0 converged, 1 iteration cap, 2 non-positive curvature.
    """
    x = x0.copy()
    bnorm = math.sqrt(float(b @ b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0, 0
    r = b - csr_matvec(indptr, indices, data, x)
    rnorm = math.sqrt(float(r @ r))
    if rnorm <= tol * bnorm:
        return x, 0, rnorm / bnorm, 0
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, maxit + 1):
        q = csr_matvec(indptr, indices, data, p)
        pq = float(p @ q)
        if pq <= 0.0:
            return x, it, rnorm / bnorm, 2
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        rnorm = math.sqrt(float(r @ r))
        if rnorm <= tol * bnorm:
            return x, it, rnorm / bnorm, 0
        z = dinv * r
        rz_new = float(r @ z)
        p *= rz_new / rz
        p += z
        rz = rz_new
    return x, maxit, rnorm / bnorm, 1


def householder_tridiagonalize(a):
    """Reduce symmetric ``a`` to tridiagonal form ``Q^T a Q``.

    Returns ``(d, e, V)`` with ``e[j]`` coupling rows j and j+1 and the
    unit Householder vectors stored column-wise in ``V`` (column j acts on
    rows j+1..n-1).
    """
    A = np.array(a, dtype=np.float64, copy=True)
    n = A.shape[0]
    d = np.zeros(n)
    e = np.zeros(max(n - 1, 0))
    V = np.zeros((n, max(n - 2, 0)))
    for j in range(n - 2):
        x = A[j + 1 :, j].copy()
        xnorm = math.sqrt(float(x @ x))
        d[j] = A[j, j]
        tail = math.sqrt(float(x[1:] @ x[1:]))
        if tail == 0.0:
            e[j] = x[0]
            continue
        alpha = -math.copysign(xnorm, x[0])
        v = x
        v[0] -= alpha
        v /= math.sqrt(float(v @ v))
        V[j + 1 :, j] = v
        S = A[j + 1 :, j + 1 :]
        p = S @ v
        c = float(v @ p)
        q = p - c * v
        S -= 2.0 * (np.outer(v, q) + np.outer(q, v))
        e[j] = alpha
    if n >= 2:
        d[n - 2] = A[n - 2, n - 2]
        e[n - 2] = A[n - 1, n - 2]
    if n >= 1:
        d[n - 1] = A[n - 1, n - 1]
    return d, e, V


def apply_householder(V, Y):
    """Map tridiagonal eigenvectors ``Y`` back to the original basis."""
    Y = np.array(Y, dtype=np.float64, copy=True)
    n = V.shape[0]
    for j in range(V.shape[1] - 1, -1, -1):
        v = V[j + 1 :, j]
        if not v.any():
            continue
        Y[j + 1 :] -= 2.0 * np.outer(v, v @ Y[j + 1 :])
    return Y[:n]


def tql(d, e, Z, want_vectors):
    """Implicit-shift QL on a symmetric tridiagonal matrix, in place.

    ``e`` has length n (last entry scratch). When ``want_vectors`` the
    rotations are accumulated into the columns of ``Z``. Returns the
    number of sweeps, or -1 when an eigenvalue fails to converge.
    """
    n = d.size
    sweeps = 0
    tst = 0.0
    for l in range(n):
        tst = max(tst, abs(d[l]) + abs(e[l]))
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = max(abs(d[m]) + abs(d[m + 1]), tst)
                if abs(e[m]) <= EPS * dd or abs(e[m]) <= SAFMIN:
                    break
                m += 1
            if m == l:
                break
            it += 1
            sweeps += 1
            if it > 60:
                return -1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            deflated = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if want_vectors:
                    zi = Z[:, i].copy()
                    zi1 = Z[:, i + 1]
                    Z[:, i] = c * zi - s * zi1
                    Z[:, i + 1] = s * zi + c * zi1
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return sweeps


def _gttrf(d, e, sigma, pivmin):
    """LU with partial pivoting of T - sigma I (LAPACK gttrf layout)."""
    n = d.size
    dd = d - sigma
    dl = e.copy()
    du = e.copy()
    du2 = np.zeros(max(n - 2, 0))
    swap = np.zeros(max(n - 1, 0), dtype=np.bool_)
    for i in range(n - 1):
        if abs(dd[i]) >= abs(dl[i]):
            if dd[i] != 0.0:
                fact = dl[i] / dd[i]
                dl[i] = fact
                dd[i + 1] -= fact * du[i]
        else:
            fact = dd[i] / dl[i]
            dd[i] = dl[i]
            dl[i] = fact
            temp = du[i]
            du[i] = dd[i + 1]
            dd[i + 1] = temp - fact * dd[i + 1]
            if i < n - 2:
                du2[i] = du[i + 1]
                du[i + 1] = -fact * du[i + 1]
            swap[i] = True
    for i in range(n):
        if abs(dd[i]) < pivmin:
            dd[i] = pivmin if dd[i] >= 0.0 else -pivmin
    return dd, dl, du, du2, swap


def _gttrs(dd, dl, du, du2, swap, b):
    n = dd.size
    x = b.copy()
    for i in range(n - 1):
        if swap[i]:
            t = x[i]
            x[i] = x[i + 1]
            x[i + 1] = t - dl[i] * x[i]
        else:
            x[i + 1] -= dl[i] * x[i]
    x[n - 1] /= dd[n - 1]
    if n >= 2:
        x[n - 2] = (x[n - 2] - du[n - 2] * x[n - 1]) / dd[n - 2]
    for i in range(n - 3, -1, -1):
        x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / dd[i]
    return x


def tridiag_inverse_iteration(d, e, evals, Y):
    """Eigenvectors of the tridiagonal (d, e) for sorted ``evals`` into ``Y``."""
    n = d.size
    tnorm = float(np.max(np.abs(d))) + (2.0 * float(np.max(np.abs(e))) if e.size else 0.0)
    tnorm = max(tnorm, 1e-300)
    pivmin = EPS * tnorm
    cluster_tol = 1e-3 * tnorm
    start = 0
    for j in range(evals.size):
        if j > 0 and evals[j] - evals[j - 1] > cluster_tol:
            start = j
        sigma = evals[j] + 4.0 * EPS * tnorm * (j - start)
        # deterministic pseudo-random start vector
        x = np.sin(np.arange(1, n + 1) * (1.0 + 0.618033988749895 * (j + 1)))
        fac = _gttrf(d, e, sigma, pivmin)
        for _ in range(5):
            x = _gttrs(*fac, x)
            for q in range(start, j):
                x -= (Y[:, q] @ x) * Y[:, q]
            x /= math.sqrt(float(x @ x))
        Y[:, j] = x
    return Y
