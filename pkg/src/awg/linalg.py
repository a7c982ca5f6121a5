"""Dense and sparse linear algebra kernels.

Sparse matrices are held as :class:`SparseSymMatrix` (CSR, both triangles
stored). Dense matrices are plain 2-D numpy arrays. The small-size work goes
through the kernels selected in :mod:`awg._backend`; past the sizes in
``KERNEL_MAX`` the ``"auto"`` method hands the work to LAPACK through scipy.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ._backend import kernels

# largest dimensions for which "auto" uses the in-house kernels
KERNEL_MAX = {"eig": 200, "chol": 1200}
JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 100
DROP_TOL = 1e-10


class NotSPDError(np.linalg.LinAlgError):
    """Cholesky met a non-positive pivot."""

    def __init__(self, pivot, msg=None):
        self.pivot = int(pivot)
        super().__init__(msg or f"matrix is not positive definite (pivot {pivot})")


class ConvergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# sparse storage

@dataclass(frozen=True, eq=False)
class SparseSymMatrix:
    """Symmetric matrix in compressed sparse row form, both triangles stored."""

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for name in ("row_offsets", "col_indices", "values"):
            getattr(self, name).setflags(write=False)

    @classmethod
    def from_scipy(cls, M, check=True) -> "SparseSymMatrix":
        """Build from any scipy sparse matrix. Duplicates are summed, explicit
        zeros are kept as structural entries."""
        M = sp.csr_matrix(M, dtype=np.float64)
        M.sum_duplicates()
        M.sort_indices()
        if M.shape[0] != M.shape[1]:
            raise ValueError(f"matrix is not square: {M.shape}")
        out = cls(M.shape[0], M.indptr.astype(np.int64), M.indices.astype(np.int64),
                  M.data.astype(np.float64))
        if check and not out.is_symmetric():
            raise ValueError("matrix is not bitwise symmetric")
        return out

    @classmethod
    def from_dense(cls, M) -> "SparseSymMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(M, dtype=float)))

    @property
    def nnz(self) -> int:
        return len(self.values)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values.copy(), self.col_indices.copy(), self.row_offsets.copy()),
                             shape=(self.n, self.n))

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def rows(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.n), np.diff(self.row_offsets))

    def is_symmetric(self) -> bool:
        S = self.to_scipy()
        T = S.T.tocsr()
        T.sort_indices()
        return (np.array_equal(S.indptr, T.indptr) and np.array_equal(S.indices, T.indices)
                and np.array_equal(S.data, T.data))

    def matvec(self, x):
        return spmv(self, x)

    def __matmul__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return spmv(self, x)
        return self.to_scipy() @ x

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def submatrix(self, idx) -> np.ndarray:
        """Dense R A R^T for the sorted index set ``idx``."""
        S = self.to_scipy()
        return S[idx][:, idx].toarray()


def spmv(A: SparseSymMatrix, x) -> np.ndarray:
    """y = A x with ascending-column summation per row."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (A.n,):
        raise ValueError(f"dimension mismatch: matrix {A.n}, vector {x.shape}")
    return kernels.csr_matvec(A.row_offsets, A.col_indices, A.values, x)


# ---------------------------------------------------------------------------
# dense symmetric eigenproblems

@dataclass
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __iter__(self):
        return iter((self.eigenvalues, self.eigenvectors))

    def __len__(self):
        return len(self.eigenvalues)


def _check_symmetric(M, tol=1e-12):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    scale = np.abs(M).max() if M.size else 0.0
    if M.size and np.abs(M - M.T).max() > tol * max(scale, np.finfo(float).tiny):
        raise ValueError("matrix is not symmetric")
    return M


def _pick(method, n, kind):
    if method == "auto":
        return "kernel" if n <= KERNEL_MAX[kind] else "lapack"
    if method in ("jacobi", "kernel"):
        return "kernel"
    if method == "lapack":
        return "lapack"
    raise ValueError(f"unknown method {method!r}")


def dense_sym_eig(M, method="auto") -> EigenDecomposition:
    """Full eigendecomposition of a symmetric matrix, eigenvalues ascending.

    ``method="jacobi"`` runs cyclic Jacobi until the off-diagonal Frobenius
    norm falls below ``1e-14 * ||M||_F``; ``"lapack"`` calls ``scipy.linalg.eigh``;
    ``"auto"`` chooses Jacobi for small matrices.
    """
    M = _check_symmetric(M)
    n = M.shape[0]
    if n == 0:
        return EigenDecomposition(np.zeros(0), np.zeros((0, 0)))
    M = 0.5 * (M + M.T)
    if _pick(method, n, "eig") == "kernel":
        w, V, sweeps = kernels.jacobi_eigh(np.ascontiguousarray(M), JACOBI_TOL, JACOBI_MAX_SWEEPS)
        if sweeps < 0:
            raise ConvergenceError(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")
        order = np.argsort(w, kind="stable")
        return EigenDecomposition(w[order], np.ascontiguousarray(V[:, order]))
    w, V = sla.eigh(M)
    return EigenDecomposition(w, V)


def generalized_sym_eig(MA, MB, method="auto") -> EigenDecomposition:
    """Solve MA y = lam MB y with MB spd by Cholesky reduction.

    Eigenvectors are MB-orthonormal, eigenvalues ascending.
    """
    MA = _check_symmetric(MA, 1e-10)
    MB = _check_symmetric(MB, 1e-10)
    n = MA.shape[0]
    if n == 0:
        return EigenDecomposition(np.zeros(0), np.zeros((0, 0)))
    L = cholesky(MB, method=method).L
    C = sla.solve_triangular(L, MA, lower=True)
    C = sla.solve_triangular(L, C.T, lower=True)
    C = 0.5 * (C + C.T)
    w, Z = dense_sym_eig(C, method=method)
    Y = sla.solve_triangular(L, Z, lower=True, trans="T")
    return EigenDecomposition(w, Y)


# ---------------------------------------------------------------------------
# Cholesky and rank revealing factorization

@dataclass
class CholeskyFactor:
    """Lower factor with optional symmetric permutation.

    For a full factor ``L L^T = M[perm][:, perm]``. For a rank-revealing factor
    only ``retained`` (original indices) take part; solves act on that subspace
    and return zeros elsewhere.
    """

    L: np.ndarray
    n: int
    perm: np.ndarray | None = None
    retained: np.ndarray | None = None
    dropped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def rank(self):
        return self.L.shape[1]

    def solve(self, b):
        return cholesky_solve(self, b)


def cholesky(M, method="auto") -> CholeskyFactor:
    """Cholesky factor of a dense spd matrix; raises :class:`NotSPDError`."""
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    if _pick(method, n, "chol") == "kernel":
        L, info = kernels.cholesky_lower(np.ascontiguousarray(M))
        if info >= 0:
            raise NotSPDError(info)
    else:
        try:
            L = sla.cholesky(M, lower=True)
        except np.linalg.LinAlgError as err:
            # LAPACK reports the failing order as "k-th leading minor"
            msg = str(err)
            digits = [int(t) for t in msg.replace("-", " ").split() if t.isdigit()]
            raise NotSPDError(digits[0] - 1 if digits else -1, msg) from None
    return CholeskyFactor(L=L, n=n)


def cholesky_solve(F: CholeskyFactor, b) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if F.retained is None:
        if b.ndim == 1 and F.n <= KERNEL_MAX["chol"]:
            return kernels.cholesky_solve_lower(np.ascontiguousarray(F.L), np.ascontiguousarray(b))
        return sla.cho_solve((F.L, True), b)
    r = F.retained
    out = np.zeros_like(b)
    if len(r):
        Lr = F.L[: len(r)]
        out[r] = sla.cho_solve((Lr, True), b[r])
    return out


def rank_revealing_sym_factor(M, drop_tol=DROP_TOL):
    """Pivoted Cholesky of a symmetric positive semi-definite matrix.

    Pivots below ``drop_tol`` times the largest pivot are discarded. Returns
    the factor (whose ``solve`` is a pseudo-solve on the retained index set)
    and the sorted retained indices.
    """
    M = np.ascontiguousarray(M, dtype=np.float64)
    n = M.shape[0]
    if n == 0:
        F = CholeskyFactor(L=np.zeros((0, 0)), n=0, perm=np.zeros(0, np.int64),
                           retained=np.zeros(0, np.int64))
        return F, F.retained
    _, perm, r = kernels.pivoted_cholesky(M, drop_tol)
    keep = np.sort(perm[:r])
    # refactor the retained block in natural order so solves are plain Cholesky
    if r:
        L = cholesky(M[np.ix_(keep, keep)]).L
    else:
        L = np.zeros((0, 0))
    F = CholeskyFactor(L=L, n=n, perm=np.asarray(perm), retained=keep,
                       dropped=np.sort(perm[r:]))
    return F, keep


# ---------------------------------------------------------------------------
# coordinate text exchange

MM_HEADER = "%%MatrixMarket matrix coordinate real symmetric"


def write_matrix_market(path, A: SparseSymMatrix, comment=None):
    """Write the lower triangle (1-based) with round-trip exact ``%.17g`` values."""
    rows = A.rows()
    cols = A.col_indices
    low = cols <= rows
    with open(path, "w") as fh:
        fh.write(MM_HEADER + "\n")
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{A.n} {A.n} {int(low.sum())}\n")
        for i, j, v in zip(rows[low], cols[low], A.values[low]):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


def read_matrix_market(path) -> SparseSymMatrix:
    """Read a symmetric coordinate file and store both triangles."""
    with open(path) as fh:
        header = fh.readline().strip()
        tokens = header.lower().split()
        if len(tokens) < 5 or tokens[0] != "%%matrixmarket" or tokens[2] != "coordinate":
            raise ValueError(f"{path}: not a coordinate MatrixMarket file")
        if tokens[4] != "symmetric":
            raise ValueError(f"{path}: expected a symmetric matrix, got {tokens[4]}")
        line = fh.readline()
        while line.startswith("%") or not line.strip():
            line = fh.readline()
        nr, nc, nnz = (int(t) for t in line.split())
        if nr != nc:
            raise ValueError(f"{path}: matrix is not square")
        data = np.loadtxt(fh, dtype=np.float64, ndmin=2) if nnz else np.zeros((0, 3))
    if data.shape[0] != nnz:
        raise ValueError(f"{path}: expected {nnz} entries, found {data.shape[0]}")
    i = data[:, 0].astype(np.int64) - 1
    j = data[:, 1].astype(np.int64) - 1
    v = data[:, 2]
    off = i != j
    rows = np.concatenate([i, j[off]])
    cols = np.concatenate([j, i[off]])
    vals = np.concatenate([v, v[off]])
    M = sp.coo_matrix((vals, (rows, cols)), shape=(nr, nr)).tocsr()
    return SparseSymMatrix.from_scipy(M)


def write_vector(path, x):
    np.savetxt(path, np.asarray(x, dtype=float), fmt="%.17g")


def read_vector(path):
    return np.loadtxt(path, dtype=np.float64, ndmin=1)
