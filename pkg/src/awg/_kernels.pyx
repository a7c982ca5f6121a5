# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels.

Every routine here has a pure numpy twin in ``_kernels_py`` with the same
signature and the same floating point operation order where that matters
(sparse matvec). ``awg._backend`` picks one at import time.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()

ctypedef cnp.int64_t idx_t


def csr_matvec(const idx_t[::1] indptr, const idx_t[::1] indices,
               const double[::1] data, const double[::1] x):
    """y = A x for CSR arrays, summing each row in stored (ascending) order."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, k
    cdef double acc
    y = np.empty(n, dtype=np.float64)
    cdef double[::1] yv = y
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc = acc + data[k] * x[indices[k]]
        yv[i] = acc
    return y


def jacobi_eigh(double[:, ::1] M, double tol, int max_sweeps):
    """Cyclic Jacobi eigensolver for a symmetric matrix.

    Returns ``(w, V, sweeps)`` with unsorted eigenvalues. ``sweeps`` is -1 when
    the off-diagonal norm did not drop below ``tol * ||M||_F``.
    """
    cdef Py_ssize_t n = M.shape[0]
    cdef Py_ssize_t p, q, k, sweep
    cdef double fro = 0.0, off, apq, app, aqq, theta, t, c, s, akp, akq, vkp, vkq
    a_arr = np.array(M, dtype=np.float64, order="C", copy=True)
    v_arr = np.eye(n, dtype=np.float64)
    cdef double[:, ::1] a = a_arr
    cdef double[:, ::1] v = v_arr
    for p in range(n):
        for q in range(n):
            fro += a[p, q] * a[p, q]
    fro = sqrt(fro)
    cdef double thresh = tol * fro
    cdef int done = -1
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += 2.0 * a[p, q] * a[p, q]
        if sqrt(off) <= thresh:
            done = sweep
            break
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                theta = (aqq - app) / (2.0 * apq)
                if fabs(theta) > 1e150:
                    t = 0.5 / theta
                elif theta >= 0:
                    t = 1.0 / (theta + sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + sqrt(1.0 + theta * theta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    akp = a[p, k]
                    akq = a[q, k]
                    a[p, k] = c * akp - s * akq
                    a[q, k] = s * akp + c * akq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    w = np.array([a[k, k] for k in range(n)], dtype=np.float64)
    return w, v_arr, done


def cholesky_lower(const double[:, ::1] M):
    """Right-looking Cholesky. Returns ``(L, info)``, info = -1 on success or
    the index of the first non-positive pivot."""
    cdef Py_ssize_t n = M.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double d, acc
    L_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] L = L_arr
    for j in range(n):
        acc = M[j, j]
        for k in range(j):
            acc -= L[j, k] * L[j, k]
        if not acc > 0.0:
            return L_arr, j
        d = sqrt(acc)
        L[j, j] = d
        for i in range(j + 1, n):
            acc = M[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            L[i, j] = acc / d
    return L_arr, -1


def cholesky_solve_lower(const double[:, ::1] L, const double[::1] b):
    """Solve (L L^T) x = b by forward and backward substitution."""
    cdef Py_ssize_t n = L.shape[0]
    cdef Py_ssize_t i, k
    cdef double acc
    x_arr = np.array(b, dtype=np.float64, copy=True)
    cdef double[::1] x = x_arr
    for i in range(n):
        acc = x[i]
        for k in range(i):
            acc -= L[i, k] * x[k]
        x[i] = acc / L[i, i]
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for k in range(i + 1, n):
            acc -= L[k, i] * x[k]
        x[i] = acc / L[i, i]
    return x_arr


def pivoted_cholesky(const double[:, ::1] M, double drop_tol):
    """Diagonally pivoted Cholesky of a symmetric positive semi-definite matrix.

    Stops once the largest remaining pivot is <= drop_tol times the first
    (largest) pivot. Returns ``(L, perm, rank)`` where ``L`` is n x rank in the
    permuted ordering: ``M[perm][:, perm][:, :rank] ~ L L[:rank]^T``.
    """
    cdef Py_ssize_t n = M.shape[0]
    cdef Py_ssize_t i, j, k, piv, r = 0
    cdef double big, first = 0.0, d, tmp
    a_arr = np.array(M, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] a = a_arr
    perm_arr = np.arange(n, dtype=np.int64)
    cdef idx_t[::1] perm = perm_arr
    cdef idx_t itmp
    for j in range(n):
        piv = j
        big = a[j, j]
        for i in range(j + 1, n):
            if a[i, i] > big:
                big = a[i, i]
                piv = i
        if j == 0:
            first = big
        if not big > drop_tol * first or not big > 0.0:
            break
        if piv != j:
            for k in range(n):
                tmp = a[j, k]; a[j, k] = a[piv, k]; a[piv, k] = tmp
            for k in range(n):
                tmp = a[k, j]; a[k, j] = a[k, piv]; a[k, piv] = tmp
            itmp = perm[j]; perm[j] = perm[piv]; perm[piv] = itmp
        d = sqrt(a[j, j])
        a[j, j] = d
        for i in range(j + 1, n):
            a[i, j] = a[i, j] / d
        for k in range(j + 1, n):
            for i in range(k, n):
                a[i, k] -= a[i, j] * a[k, j]
            for i in range(k, n):
                a[k, i] = a[i, k]
        r += 1
    L_arr = np.tril(a_arr)[:, :r].copy()
    return L_arr, perm_arr, r
