"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Signatures and return conventions match the compiled module exactly so the
backend switch in ``awg._backend`` is transparent.
"""
import numpy as np


def csr_matvec(indptr, indices, data, x):
    """y = A x for CSR arrays, each row summed in stored (ascending) order."""
    n = len(indptr) - 1
    prod = data * x[indices]
    y = np.zeros(n)
    # sequential left-to-right reduction per row keeps the compiled summation order
    lens = np.diff(indptr)
    width = int(lens.max()) if n else 0
    starts = indptr[:-1]
    for k in range(width):
        rows = np.nonzero(lens > k)[0]
        y[rows] = y[rows] + prod[starts[rows] + k]
    return y


def _sweep_pairs(n):
    for p in range(n - 1):
        for q in range(p + 1, n):
            yield p, q


def jacobi_eigh(M, tol, max_sweeps):
    """Cyclic Jacobi eigensolver, see the compiled twin for the contract."""
    a = np.array(M, dtype=float, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    fro = np.sqrt(np.sum(a * a))
    done = -1
    for sweep in range(max_sweeps + 1):
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off <= tol * fro:
            done = sweep
            break
        if sweep == max_sweeps:
            break
        for p, q in _sweep_pairs(n):
            apq = a[p, q]
            if apq == 0.0:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            if abs(theta) > 1e150:
                t = 0.5 / theta
            elif theta >= 0:
                t = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
            else:
                t = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            ap, aq = a[:, p].copy(), a[:, q].copy()
            a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
            ap, aq = a[p, :].copy(), a[q, :].copy()
            a[p, :], a[q, :] = c * ap - s * aq, s * ap + c * aq
            a[p, q] = a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
    return np.diag(a).copy(), v, done


def cholesky_lower(M):
    """Cholesky factor ``(L, info)``; info is -1 or the failing pivot index."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        d = M[j, j] - L[j, :j] @ L[j, :j]
        if not d > 0.0:
            return L, j
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = (M[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L, -1


def cholesky_solve_lower(L, b):
    """Solve (L L^T) x = b by substitution."""
    n = L.shape[0]
    x = np.array(b, dtype=float, copy=True)
    for i in range(n):
        x[i] = (x[i] - L[i, :i] @ x[:i]) / L[i, i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - L[i + 1:, i] @ x[i + 1:]) / L[i, i]
    return x


def pivoted_cholesky(M, drop_tol):
    """Diagonally pivoted Cholesky, see the compiled twin for the contract."""
    a = np.array(M, dtype=float, copy=True)
    n = a.shape[0]
    perm = np.arange(n, dtype=np.int64)
    first = 0.0
    r = 0
    for j in range(n):
        piv = j + int(np.argmax(np.diag(a)[j:]))
        big = a[piv, piv]
        if j == 0:
            first = big
        if not big > drop_tol * first or not big > 0.0:
            break
        if piv != j:
            a[[j, piv], :] = a[[piv, j], :]
            a[:, [j, piv]] = a[:, [piv, j]]
            perm[[j, piv]] = perm[[piv, j]]
        d = np.sqrt(a[j, j])
        a[j, j] = d
        a[j + 1:, j] /= d
        col = a[j + 1:, j]
        a[j + 1:, j + 1:] -= np.outer(col, col)
        r += 1
    return np.tril(a)[:, :r].copy(), perm, r
