"""Preconditioned conjugate gradients with Lanczos spectrum estimates."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .linalg import dense_sym_eig

NORMS = ("preconditioned", "unpreconditioned")


class BreakdownError(ArithmeticError):
    """p^T A p <= 0 or r^T H r < 0: one of the operators is not spd."""


@dataclass
class SolveReport:
    iterations: int
    residual_history: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray
    converged: bool
    norm: str = "preconditioned"
    true_residual: float = np.nan
    ritz_min: float = np.nan
    ritz_max: float = np.nan
    extras: dict = field(default_factory=dict)

    @property
    def kappa_estimate(self) -> float:
        return self.ritz_max / self.ritz_min


def lanczos_tridiagonal(alphas, betas, k=None):
    """Tridiagonal matrix of the Lanczos process behind k CG steps."""
    k = len(alphas) if k is None else k
    T = np.zeros((k, k))
    for i in range(k):
        T[i, i] = 1.0 / alphas[i] + (betas[i - 1] / alphas[i - 1] if i > 0 else 0.0)
        if i + 1 < k:
            T[i, i + 1] = T[i + 1, i] = np.sqrt(betas[i]) / alphas[i]
    return T


def estimate_spectrum(report: SolveReport, k=None):
    """Extreme Ritz values of the preconditioned operator after k iterations."""
    k = report.iterations if k is None else k
    if k < 1 or len(report.alphas) < k:
        raise ValueError("not enough iterations recorded for a spectrum estimate")
    if k >= 2 and len(report.betas) < k - 1:
        raise ValueError("not enough iterations recorded for a spectrum estimate")
    w = dense_sym_eig(lanczos_tridiagonal(report.alphas, report.betas, k)).eigenvalues
    return float(w[0]), float(w[-1])


def pcg(apply_A, apply_H, b, rtol=1e-10, maxit=1000, norm="preconditioned", x0=None):
    """Solve A x = b by PCG from a zero (or given) initial guess.

    The stopping test is ``||r_k|| / ||r_0|| <= rtol`` measured in the chosen
    norm: ``"preconditioned"`` uses ``||H r||_2``, ``"unpreconditioned"`` uses
    ``||r||_2`` with an explicit recomputation of the residual at exit.
    Returns ``(x, report)``; the report carries the Lanczos coefficients and the
    extreme Ritz values.
    """
    if norm not in NORMS:
        raise ValueError(f"norm must be one of {NORMS}")
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_A(x) if x0 is not None else b.copy()
    z = apply_H(r)
    rz = float(r @ z)
    if rz < 0:
        raise BreakdownError("preconditioner is not positive: r^T H r < 0")
    nb = float(np.linalg.norm(b))
    ref = float(np.linalg.norm(z)) if norm == "preconditioned" else float(np.linalg.norm(r))
    alphas, betas, hist = [], [], []
    if ref == 0.0 or nb == 0.0:
        rep = SolveReport(0, np.zeros(0), np.zeros(0), np.zeros(0), True, norm, 0.0, 1.0, 1.0)
        return x, rep
    p = z.copy()
    converged = False
    it = 0
    while it < maxit:
        q = apply_A(p)
        pq = float(p @ q)
        if not pq > 0:
            raise BreakdownError(f"p^T A p = {pq:g} at iteration {it}")
        a = rz / pq
        x += a * p
        r -= a * q
        alphas.append(a)
        it += 1
        z = apply_H(r)
        res = float(np.linalg.norm(z)) if norm == "preconditioned" else float(np.linalg.norm(r))
        hist.append(res / ref)
        if hist[-1] <= rtol:
            converged = True
            break
        rzn = float(r @ z)
        if rzn < 0:
            raise BreakdownError(f"r^T H r = {rzn:g} at iteration {it}")
        beta = rzn / rz
        betas.append(beta)
        rz = rzn
        p = z + beta * p
    true_res = float(np.linalg.norm(b - apply_A(x))) / nb
    rep = SolveReport(iterations=it, residual_history=np.asarray(hist), alphas=np.asarray(alphas),
                      betas=np.asarray(betas), converged=converged, norm=norm,
                      true_residual=true_res)
    rep.extras["recursive_residual"] = float(np.linalg.norm(r)) / nb
    if it >= 1:
        rep.ritz_min, rep.ritz_max = estimate_spectrum(rep)
    return x, rep


def pcg_many(apply_A, apply_H, B, rtol=1e-10, maxit=1000, norm="preconditioned"):
    """Independent PCG solves for the columns of B, run side by side.

    Each column follows its own recurrence and stopping test as in
    :func:`pcg`; only the operator applications are batched over the columns
    still iterating. Blocked products round differently from single ones, so
    a column may stop one step earlier or later than a lone :func:`pcg` run.
    Returns ``(X, iterations, converged)``.
    """
    if norm not in NORMS:
        raise ValueError(f"norm must be one of {NORMS}")
    B = np.asarray(B, dtype=float)
    n, m = B.shape
    X = np.zeros_like(B)
    its = np.zeros(m, dtype=np.int64)
    done = np.zeros(m, dtype=bool)
    if m == 0:
        return X, its, done
    R = B.copy()
    Z = apply_H(R)
    rz = np.einsum("ij,ij->j", R, Z)
    ref = np.linalg.norm(Z if norm == "preconditioned" else R, axis=0)
    done = ref == 0.0
    P = Z.copy()
    act = np.flatnonzero(~done)
    it = 0
    while act.size and it < maxit:
        Q = apply_A(P[:, act])
        pq = np.einsum("ij,ij->j", P[:, act], Q)
        if np.any(~(pq > 0)):
            raise BreakdownError(f"p^T A p <= 0 at iteration {it}")
        a = rz[act] / pq
        X[:, act] += a * P[:, act]
        R[:, act] -= a * Q
        it += 1
        its[act] = it
        Za = apply_H(R[:, act])
        res = np.linalg.norm(Za if norm == "preconditioned" else R[:, act], axis=0) / ref[act]
        fin = res <= rtol
        done[act[fin]] = True
        keep = ~fin
        act, Za = act[keep], Za[:, keep]
        if not act.size:
            break
        rzn = np.einsum("ij,ij->j", R[:, act], Za)
        beta = rzn / rz[act]
        rz[act] = rzn
        P[:, act] = Za + beta * P[:, act]
    return X, its, done


def materialize(apply_op, n, block=256):
    """Dense matrix of a linear operator, built from block applications."""
    M = np.zeros((n, n))
    for start in range(0, n, block):
        stop = min(start + block, n)
        E = np.zeros((n, stop - start))
        E[np.arange(start, stop), np.arange(stop - start)] = 1.0
        M[:, start:stop] = apply_op(E)
    return M


def dense_spectrum(apply_A, apply_H, n, cap=2000):
    """All eigenvalues of H A for spd A and symmetric H (ascending).

    Uses A = L L^T and the symmetric matrix L^T H L, which is similar to H A.
    """
    if n > cap:
        raise ValueError(f"dense spectrum requested for n = {n} > cap {cap}")
    A = materialize(apply_A, n)
    H = materialize(apply_H, n)
    A = 0.5 * (A + A.T)
    H = 0.5 * (H + H.T)
    L = sla.cholesky(A, lower=True)
    S = L.T @ H @ L
    return sla.eigvalsh(0.5 * (S + S.T))
