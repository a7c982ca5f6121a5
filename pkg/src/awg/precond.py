"""One-level, two-level and AWG preconditioners.

The two-level operator ``H2`` targets A+ and uses a GenEO coarse space. The
AWG operator ``H3`` targets A: it adds a second coarse space W whose columns
span A+^-1 V-, where V- gathers the strictly negative local eigenvectors.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .dd import PartitionOfUnity, SplitOperator, build_pou
from .geneo import CoarseSpace, ThresholdSpec, build_coarse, coarse_from_basis
from .krylov import pcg, pcg_many
from .linalg import DROP_TOL, cholesky

ONE_LEVEL = ("AS", "AS_PLUS", "NN")
COMPOSITIONS = ("additive", "hybrid")
AWG_MODES = ("ad", "hyb", "inex", "none")


@dataclass(frozen=True)
class PreconditionerConfig:
    one_level: str = "NN"
    composition: str = "hybrid"
    threshold: ThresholdSpec | None = ThresholdSpec("NN", tau_sharp=0.1)
    awg_mode: str = "ad"
    w_rtol: float = 1e-10
    w_norm: str = "preconditioned"

    def __post_init__(self):
        if self.one_level not in ONE_LEVEL:
            raise ValueError(f"one_level must be one of {ONE_LEVEL}")
        if self.composition not in COMPOSITIONS:
            raise ValueError(f"composition must be one of {COMPOSITIONS}")
        if self.awg_mode not in AWG_MODES:
            raise ValueError(f"awg_mode must be one of {AWG_MODES}")
        if not 0.0 < self.w_rtol < 1.0:
            raise ValueError("w_rtol must lie in (0, 1)")

    @property
    def has_bound(self) -> bool:
        """True when a spectral bound is known for this pairing."""
        if self.threshold is None:
            return False
        return (self.one_level, self.composition) in {
            ("NN", "hybrid"), ("AS", "hybrid"), ("AS_PLUS", "hybrid"), ("AS_PLUS", "additive")}

    def label(self):
        head = {"AS": "AS", "AS_PLUS": "AS+", "NN": "NN"}[self.one_level]
        if self.threshold is None:
            body = f"one-level {head}"
        else:
            taus = self.threshold.label().split("(", 1)[1]
            body = f"{head}-{self.composition[:3]}({taus}"
        if self.awg_mode == "none":
            return body
        return f"H3,{self.awg_mode} / {body}"


# ---------------------------------------------------------------------------
# one level

class OneLevel:
    """Sum of local solves ``sum_s R^sT S_s R^s``.

    AS solves with R A R^T, AS_PLUS with R A+ R^T (dense Cholesky of the local
    block); NN applies ``D^s (A^s_+)^+ D^s``.
    """

    def __init__(self, kind, op: SplitOperator, pou: PartitionOfUnity | None = None):
        if kind not in ONE_LEVEL:
            raise ValueError(f"unknown one-level kind {kind!r}")
        self.kind = kind
        self.op = op
        self.pou = pou if pou is not None else build_pou(op.partition)
        self.omega = op.partition.omega
        self.local = []
        for s in range(op.partition.N):
            if kind == "AS":
                self.local.append(cholesky(op.local_A_block(s)))
            elif kind == "AS_PLUS":
                self.local.append(cholesky(op.local_Aplus_block(s)))
            else:
                ls = op.splits[s]
                d = self.pou.D[s]
                V = d[:, None] * ls.V_pos
                Ns = (V / ls.L_pos) @ V.T
                self.local.append(0.5 * (Ns + Ns.T))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        y = np.zeros_like(x)
        for o, loc in zip(self.omega, self.local):
            xs = x[o]
            y[o] += loc @ xs if self.kind == "NN" else loc.solve(xs)
        return y


def apply_one_level(H: OneLevel, x):
    return H(x)


class TwoLevel:
    """Additive ``H + Q`` or hybrid ``Pi H Pi^T + Q`` with Q the coarse solve."""

    def __init__(self, one: OneLevel, coarse: CoarseSpace | None, composition="hybrid"):
        self.one = one
        self.coarse = coarse
        self.composition = composition

    def __call__(self, x):
        cs = self.coarse
        if cs is None or cs.dim == 0:
            return self.one(x)
        if self.composition == "additive":
            return self.one(x) + cs.correct(x)
        return cs.project(self.one(cs.project_T(x))) + cs.correct(x)


def apply_H2(H2: TwoLevel, x):
    return H2(x)


# ---------------------------------------------------------------------------
# second coarse space

@dataclass(eq=False)
class SecondCoarse:
    """W = A+^-1 V- (columns A-normalised) with a factor of W^T A W.

    ``W_raw`` keeps the unscaled solves for the inexact Woodbury variant;
    ``V`` and ``lam`` hold the global negative eigenvectors and the positive
    weights -lambda, so that A- restricted to them is ``V diag(lam) V^T``.
    """

    space: CoarseSpace
    W_raw: np.ndarray
    V: np.ndarray
    lam: np.ndarray
    inner_iterations: list = field(default_factory=list)

    @property
    def n_minus(self) -> int:
        return self.space.rank

    @property
    def W(self):
        return self.space.Z


def negative_columns(op: SplitOperator):
    """Global V- columns and weights for strictly negative local eigenvalues."""
    cols, lam = [], []
    for o, ls in zip(op.partition.omega, op.splits):
        mask = ls.strict
        for k in np.flatnonzero(mask):
            v = np.zeros(op.n)
            v[o] = ls.eigenvectors[:, k]
            cols.append(v)
            lam.append(-ls.eigenvalues[k])
    V = np.column_stack(cols) if cols else np.zeros((op.n, 0))
    return V, np.asarray(lam, dtype=float)


def build_W(op: SplitOperator, H2, w_rtol=1e-10, maxit=None, norm="preconditioned",
            exact=None, drop_tol=DROP_TOL, batched=True) -> SecondCoarse:
    """Second coarse space from one PCG solve with A+ per negative mode.

    With ``batched`` the independent solves advance together so operator
    applications act on blocks; the per-column iterations are unchanged.
    ``exact`` may supply a direct solver for A+ (used by small-scale tests).
    """
    V, lam = negative_columns(op)
    n = op.n
    maxit = 10 * n if maxit is None else maxit
    if exact is not None:
        W = np.column_stack([exact(V[:, k]) for k in range(V.shape[1])]) if V.shape[1] else V.copy()
        its = [0] * V.shape[1]
    elif batched:
        W, its, ok = pcg_many(op.apply_Aplus, H2, V, rtol=w_rtol, maxit=maxit, norm=norm)
        if not np.all(ok):
            raise RuntimeError(f"{int((~ok).sum())} inner solves did not converge in {maxit} "
                               "iterations; the A+ preconditioner is probably broken")
        its = its.tolist()
    else:
        W = np.zeros_like(V)
        its = []
        for k in range(V.shape[1]):
            w, rep = pcg(op.apply_Aplus, H2, V[:, k], rtol=w_rtol, maxit=maxit, norm=norm)
            if not rep.converged:
                raise RuntimeError(f"inner solve {k} did not converge in {maxit} iterations; "
                                   "the A+ preconditioner is probably broken")
            W[:, k] = w
            its.append(rep.iterations)
    AW = op.apply_A(W)
    scale = np.sqrt(np.einsum("ij,ij->j", W, AW)) if W.shape[1] else np.zeros(0)
    Wn = W / scale
    space = coarse_from_basis(Wn, op.apply_A, "A", drop_tol)
    return SecondCoarse(space=space, W_raw=W, V=V, lam=lam, inner_iterations=its)


def apply_Pi3(sc: SecondCoarse, x, transpose=False):
    return sc.space.project_T(x) if transpose else sc.space.project(x)


class AWG:
    """AWG preconditioner for A built on ``H2`` and the second coarse space."""

    def __init__(self, H2, sc: SecondCoarse, mode="ad"):
        if mode not in ("ad", "hyb", "inex"):
            raise ValueError(f"unknown AWG mode {mode!r}")
        self.H2 = H2
        self.sc = sc
        self.mode = mode
        if mode == "inex" and sc.V.shape[1]:
            C = np.diag(1.0 / sc.lam) - sc.V.T @ sc.W_raw
            self._core = sla.lu_factor(0.5 * (C + C.T))

    def __call__(self, x):
        sc = self.sc
        if sc.V.shape[1] == 0:
            return self.H2(x)
        if self.mode == "ad":
            return self.H2(x) + sc.space.correct(x)
        if self.mode == "hyb":
            cs = sc.space
            return cs.project(self.H2(cs.project_T(x))) + cs.correct(x)
        Wr = sc.W_raw
        return self.H2(x) + Wr @ sla.lu_solve(self._core, Wr.T @ x)


def apply_H3(H3: AWG, x):
    return H3(x)


# ---------------------------------------------------------------------------
# assembly of a full preconditioner from a config

@dataclass(eq=False)
class Preconditioner:
    """Everything built for one configuration.

    ``H_plus`` acts as a preconditioner for A+ and ``H`` for A (equal to
    ``H_plus`` when ``awg_mode == "none"``).
    """

    config: PreconditionerConfig
    op: SplitOperator
    pou: PartitionOfUnity
    one: OneLevel
    coarse: CoarseSpace | None
    H_plus: object
    second: SecondCoarse | None
    H: object

    @property
    def coarse_dim(self) -> int:
        return 0 if self.coarse is None else self.coarse.dim

    @property
    def n_minus(self) -> int:
        return self.op.n_minus


def build_preconditioner(cfg: PreconditionerConfig, op: SplitOperator, method="auto",
                         second: SecondCoarse | None = None) -> Preconditioner:
    """Set up the configured preconditioner. A ready ``second`` space can be
    passed in to share W between runs that differ only in the AWG mode."""
    pou = build_pou(op.partition)
    one = OneLevel(cfg.one_level, op, pou)
    coarse = build_coarse(cfg.threshold, op, pou, method) if cfg.threshold is not None else None
    H2 = TwoLevel(one, coarse, cfg.composition)
    if cfg.awg_mode == "none":
        return Preconditioner(cfg, op, pou, one, coarse, H2, None, H2)
    if second is None:
        second = build_W(op, H2, cfg.w_rtol, norm=cfg.w_norm)
    H3 = AWG(H2, second, cfg.awg_mode)
    return Preconditioner(cfg, op, pou, one, coarse, H2, second, H3)
