"""Numba-compiled kernels; same signatures and results as ``_numpy``."""

import math

import numpy as np
from numba import njit

EPS = np.finfo(np.float64).eps
SAFMIN = np.finfo(np.float64).tiny

_opts = dict(cache=True, nogil=True)


@njit(**_opts)
def _coo_to_csr(rows, cols, vals, nrows):
    order = np.argsort(rows * (cols.max() + 1 if cols.size else 1) + cols, kind="mergesort")
    nnz_in = rows.size
    indptr = np.zeros(nrows + 1, np.int64)
    indices = np.empty(nnz_in, np.int64)
    data = np.empty(nnz_in, np.float64)
    k = -1
    last_r = -1
    last_c = -1
    for t in range(nnz_in):
        o = order[t]
        r = rows[o]
        c = cols[o]
        if r == last_r and c == last_c:
            data[k] += vals[o]
        else:
            k += 1
            indices[k] = c
            data[k] = vals[o]
            indptr[r + 1] += 1
            last_r = r
            last_c = c
    for i in range(nrows):
        indptr[i + 1] += indptr[i]
    return indptr, indices[: k + 1].copy(), data[: k + 1].copy()


def coo_to_csr(rows, cols, vals, nrows):
    return _coo_to_csr(
        np.ascontiguousarray(rows, dtype=np.int64),
        np.ascontiguousarray(cols, dtype=np.int64),
        np.ascontiguousarray(vals, dtype=np.float64),
        nrows,
    )


@njit(**_opts)
def csr_matvec(indptr, indices, data, x):
    n = indptr.size - 1
    y = np.zeros(n)
    for i in range(n):
        s = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            s += data[k] * x[indices[k]]
        y[i] = s
    return y


@njit(**_opts)
def _csr_matmat(indptr, indices, data, X):
    n = indptr.size - 1
    m = X.shape[1]
    Y = np.zeros((n, m))
    for i in range(n):
        for k in range(indptr[i], indptr[i + 1]):
            a = data[k]
            j = indices[k]
            for c in range(m):
                Y[i, c] += a * X[j, c]
    return Y


def csr_matmat(indptr, indices, data, X):
    return _csr_matmat(indptr, indices, data, np.ascontiguousarray(X, dtype=np.float64))


@njit(**_opts)
def p1_local_stiffness(xy, tris):
    nt = tris.shape[0]
    K = np.empty((nt, 3, 3))
    area = np.empty(nt)
    E = np.empty((3, 2))
    for t in range(nt):
        a = tris[t, 0]
        b = tris[t, 1]
        c = tris[t, 2]
        E[0, 0] = xy[c, 0] - xy[b, 0]
        E[0, 1] = xy[c, 1] - xy[b, 1]
        E[1, 0] = xy[a, 0] - xy[c, 0]
        E[1, 1] = xy[a, 1] - xy[c, 1]
        E[2, 0] = xy[b, 0] - xy[a, 0]
        E[2, 1] = xy[b, 1] - xy[a, 1]
        ar = 0.5 * (E[2, 0] * (-E[1, 1]) - E[2, 1] * (-E[1, 0]))
        area[t] = ar
        for i in range(3):
            for j in range(3):
                K[t, i, j] = (E[i, 0] * E[j, 0] + E[i, 1] * E[j, 1]) / (4.0 * ar)
    return K, area


@njit(**_opts)
def pcg(indptr, indices, data, b, x0, dinv, tol, maxit):
    n = b.size
    x = x0.copy()
    bnorm = math.sqrt(np.dot(b, b))
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0, 0
    r = b - csr_matvec(indptr, indices, data, x)
    rnorm = math.sqrt(np.dot(r, r))
    if rnorm <= tol * bnorm:
        return x, 0, rnorm / bnorm, 0
    z = dinv * r
    p = z.copy()
    rz = np.dot(r, z)
    q = np.empty(n)
    for it in range(1, maxit + 1):
        pq = 0.0
        for i in range(n):
            s = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                s += data[k] * p[indices[k]]
            q[i] = s
            pq += p[i] * s
        if pq <= 0.0:
            return x, it, rnorm / bnorm, 2
        alpha = rz / pq
        rr = 0.0
        for i in range(n):
            x[i] += alpha * p[i]
            r[i] -= alpha * q[i]
            rr += r[i] * r[i]
        rnorm = math.sqrt(rr)
        if rnorm <= tol * bnorm:
            return x, it, rnorm / bnorm, 0
        rz_new = 0.0
        for i in range(n):
            z[i] = dinv[i] * r[i]
            rz_new += r[i] * z[i]
        beta = rz_new / rz
        for i in range(n):
            p[i] = z[i] + beta * p[i]
        rz = rz_new
    return x, maxit, rnorm / bnorm, 1


@njit(**_opts)
def _tridiagonalize(A):
    n = A.shape[0]
    d = np.zeros(n)
    e = np.zeros(max(n - 1, 0))
    V = np.zeros((n, max(n - 2, 0)))
    v = np.empty(n)
    p = np.empty(n)
    for j in range(n - 2):
        m = n - j - 1
        xnorm2 = 0.0
        for i in range(m):
            xnorm2 += A[j + 1 + i, j] ** 2
        d[j] = A[j, j]
        x0 = A[j + 1, j]
        tail2 = xnorm2 - x0 * x0
        if tail2 <= 0.0:
            e[j] = x0
            continue
        alpha = -math.copysign(math.sqrt(xnorm2), x0)
        for i in range(m):
            v[i] = A[j + 1 + i, j]
        v[0] -= alpha
        vn = 0.0
        for i in range(m):
            vn += v[i] * v[i]
        vn = math.sqrt(vn)
        for i in range(m):
            v[i] /= vn
            V[j + 1 + i, j] = v[i]
        c = 0.0
        for i in range(m):
            s = 0.0
            for k in range(m):
                s += A[j + 1 + i, j + 1 + k] * v[k]
            p[i] = s
            c += v[i] * s
        for i in range(m):
            p[i] -= c * v[i]
        for i in range(m):
            vi = v[i]
            pi = p[i]
            for k in range(m):
                A[j + 1 + i, j + 1 + k] -= 2.0 * (vi * p[k] + pi * v[k])
        e[j] = alpha
    if n >= 2:
        d[n - 2] = A[n - 2, n - 2]
        e[n - 2] = A[n - 1, n - 2]
    if n >= 1:
        d[n - 1] = A[n - 1, n - 1]
    return d, e, V


def householder_tridiagonalize(a):
    return _tridiagonalize(np.array(a, dtype=np.float64, copy=True))


@njit(**_opts)
def _apply_householder(V, Y):
    n = V.shape[0]
    m = Y.shape[1]
    s = np.empty(m)
    for j in range(V.shape[1] - 1, -1, -1):
        nz = False
        for i in range(j + 1, n):
            if V[i, j] != 0.0:
                nz = True
                break
        if not nz:
            continue
        s[:] = 0.0
        for i in range(j + 1, n):
            v = V[i, j]
            for c in range(m):
                s[c] += v * Y[i, c]
        for i in range(j + 1, n):
            v = 2.0 * V[i, j]
            for c in range(m):
                Y[i, c] -= v * s[c]
    return Y


def apply_householder(V, Y):
    return _apply_householder(V, np.array(Y, dtype=np.float64, copy=True))


@njit(**_opts)
def _tql(d, e, Z, want_vectors):
    n = d.size
    nz = Z.shape[1]
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
                    # Z is passed transposed: row i holds column i
                    for k in range(nz):
                        zi = Z[i, k]
                        zi1 = Z[i + 1, k]
                        Z[i, k] = c * zi - s * zi1
                        Z[i + 1, k] = s * zi + c * zi1
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return sweeps


def tql(d, e, Z, want_vectors):
    if not want_vectors:
        return _tql(d, e, np.zeros((0, 0)), False)
    ZT = np.ascontiguousarray(Z.T)
    sweeps = _tql(d, e, ZT, True)
    Z[...] = ZT.T
    return sweeps


@njit(**_opts)
def _gttrf(d, e, sigma, pivmin):
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


@njit(**_opts)
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


@njit(**_opts)
def _inverse_iteration(d, e, evals, Y):
    n = d.size
    tnorm = np.max(np.abs(d))
    if e.size:
        tnorm += 2.0 * np.max(np.abs(e))
    tnorm = max(tnorm, 1e-300)
    pivmin = EPS * tnorm
    cluster_tol = 1e-3 * tnorm
    start = 0
    x = np.empty(n)
    for j in range(evals.size):
        if j > 0 and evals[j] - evals[j - 1] > cluster_tol:
            start = j
        sigma = evals[j] + 4.0 * EPS * tnorm * (j - start)
        for i in range(n):
            x[i] = math.sin((i + 1) * (1.0 + 0.618033988749895 * (j + 1)))
        dd, dl, du, du2, swap = _gttrf(d, e, sigma, pivmin)
        for _ in range(5):
            x = _gttrs(dd, dl, du, du2, swap, x)
            for q in range(start, j):
                s = 0.0
                for i in range(n):
                    s += Y[i, q] * x[i]
                for i in range(n):
                    x[i] -= s * Y[i, q]
            nrm = math.sqrt(np.dot(x, x))
            for i in range(n):
                x[i] /= nrm
        for i in range(n):
            Y[i, j] = x[i]
    return Y


def tridiag_inverse_iteration(d, e, evals, Y):
    return _inverse_iteration(d, e, evals, Y)
