"""Spectral coarse spaces for A+ from local generalized eigenproblems.

Three selections are provided, all built on the pencils

* ``(D^-1 A^s_+ D^-1, R^s A+ R^sT)`` used by the NN and AS_PLUS variants,
* ``(D^-1 A^s_+ D^-1, R^s A R^sT)`` and ``(R^s A R^sT, R^s A+ R^sT)`` used by AS.

Coarse vectors are the extended local eigenvectors ``R^sT y`` without any
partition of unity weighting.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dd import PartitionOfUnity, SplitOperator
from .linalg import CholeskyFactor, generalized_sym_eig, rank_revealing_sym_factor, DROP_TOL

VARIANTS = ("NN", "AS_PLUS", "AS")


@dataclass(frozen=True)
class ThresholdSpec:
    """Coarse space variant and its thresholds.

    NN uses ``tau_sharp`` in (0, 1); AS_PLUS uses ``tau_flat`` > 1; AS uses both.
    """

    variant: str
    tau_sharp: float | None = None
    tau_flat: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown coarse variant {self.variant!r}")
        if self.variant in ("NN", "AS"):
            if self.tau_sharp is None or not 0.0 <= self.tau_sharp < 1.0:
                raise ValueError(f"{self.variant} needs 0 <= tau_sharp < 1, got {self.tau_sharp}")
        if self.variant in ("AS_PLUS", "AS"):
            if self.tau_flat is None or not self.tau_flat > 1.0:
                raise ValueError(f"{self.variant} needs tau_flat > 1, got {self.tau_flat}")

    def label(self):
        if self.variant == "NN":
            return f"NN({self.tau_sharp:g})"
        if self.variant == "AS_PLUS":
            return f"AS+({self.tau_flat:g})"
        return f"AS({self.tau_sharp:g},{self.tau_flat:g})"


def select_YL(tau, MA, MB, method="auto"):
    """MB-normalised eigenvectors of (MA, MB) with eigenvalue strictly below tau.

    Returns ``(Y, eigenvalues)``, both in ascending eigenvalue order; the
    eigenvalues are the full pencil spectrum.
    """
    w, Y = generalized_sym_eig(MA, MB, method=method)
    m = int(np.searchsorted(w, tau, side="left"))
    return Y[:, :m], w


def select_YH(tau, MA, MB, method="auto"):
    """Complement of :func:`select_YL`: eigenvalues >= tau."""
    w, Y = generalized_sym_eig(MA, MB, method=method)
    m = int(np.searchsorted(w, tau, side="left"))
    return Y[:, m:], w


@dataclass(eq=False)
class CoarseSpace:
    """Tall basis Z with a rank revealing factor of Z^T M Z.

    ``MZ`` caches M Z so projections cost one small solve and two thin
    products. ``Z`` keeps every selected vector; solves only use the retained
    columns.
    """

    Z: np.ndarray
    MZ: np.ndarray
    K0: CholeskyFactor
    tag: str = "A+"
    counts: list = field(default_factory=list)
    spectra: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.Z.shape[1]

    @property
    def rank(self) -> int:
        return 0 if self.K0 is None else len(self.K0.retained)

    def _solve(self, c):
        return self.K0.solve(c)

    def correct(self, x):
        """Z (Z^T M Z)^+ Z^T x."""
        if self.dim == 0:
            return np.zeros_like(x)
        return self.Z @ self._solve(self.Z.T @ x)

    def project(self, x):
        """Pi x = x - Z (Z^T M Z)^+ Z^T M x."""
        if self.dim == 0:
            return np.array(x, dtype=float, copy=True)
        return x - self.Z @ self._solve(self.MZ.T @ x)

    def project_T(self, x):
        """Pi^T x = x - M Z (Z^T M Z)^+ Z^T x."""
        if self.dim == 0:
            return np.array(x, dtype=float, copy=True)
        return x - self.MZ @ self._solve(self.Z.T @ x)


def coarse_from_basis(Z, apply_M, tag="A+", drop_tol=DROP_TOL, **extra) -> CoarseSpace:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise ValueError("coarse basis must be a 2-D array")
    if Z.shape[1] == 0:
        return CoarseSpace(Z=Z, MZ=Z.copy(), K0=None, tag=tag, **extra)
    MZ = apply_M(Z)
    E0 = Z.T @ MZ
    E0 = 0.5 * (E0 + E0.T)
    K0, _ = rank_revealing_sym_factor(E0, drop_tol)
    return CoarseSpace(Z=Z, MZ=MZ, K0=K0, tag=tag, **extra)


def coarse_correct(cs: CoarseSpace, x):
    return cs.correct(x)


def apply_projector(cs: CoarseSpace, x, transpose=False):
    return cs.project_T(x) if transpose else cs.project(x)


def local_pencils(op: SplitOperator, pou: PartitionOfUnity, s):
    """Dense matrices of subdomain s: D^-1 A^s_+ D^-1, R A R^T, R A+ R^T."""
    dinv = 1.0 / pou.D[s]
    Ap = op.splits[s].Aplus_local()
    MA = dinv[:, None] * Ap * dinv[None, :]
    return MA, op.local_A_block(s), op.local_Aplus_block(s)


def build_coarse(spec: ThresholdSpec, op: SplitOperator, pou: PartitionOfUnity,
                 method="auto", drop_tol=DROP_TOL) -> CoarseSpace:
    """GenEO coarse space for A+ according to ``spec``."""
    n = op.n
    blocks, counts, spectra = [], [], []
    for s, o in enumerate(op.partition.omega):
        MA, As, Aps = local_pencils(op, pou, s)
        if spec.variant == "NN":
            Y, w = select_YL(spec.tau_sharp, MA, Aps, method)
            spec_s = {"pencil": w}
        elif spec.variant == "AS_PLUS":
            Y, w = select_YL(1.0 / spec.tau_flat, MA, Aps, method)
            spec_s = {"pencil": w}
        else:
            Y1, w1 = select_YL(1.0 / spec.tau_flat, MA, As, method)
            Y2, w2 = select_YL(spec.tau_sharp, As, Aps, method)
            Y = np.hstack([Y1, Y2])
            spec_s = {"pencil": w1, "pencil2": w2}
        Zs = np.zeros((n, Y.shape[1]))
        Zs[o] = Y
        blocks.append(Zs)
        counts.append(Y.shape[1])
        spectra.append(spec_s)
    Z = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return coarse_from_basis(Z, op.apply_Aplus, "A+", drop_tol, counts=counts, spectra=spectra)
