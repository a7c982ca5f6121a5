"""Algebraic Woodbury-GenEO domain decomposition preconditioners.

Modules
-------
linalg
    Sparse storage, dense eigensolvers, Cholesky and coordinate file I/O.
fem
    Q1 elasticity test problems.
dd
    Partitions, the multiplicity-weighted splitting and A+ / A- operators.
geneo
    Spectral coarse spaces for A+.
precond
    One-level, two-level and AWG preconditioners.
krylov
    PCG with Lanczos spectrum estimates.
experiment, cli
    Configured runs, sweeps and table reproduction.
"""
from ._backend import BACKEND
from .dd import Partition, SplitOperator, build_pou, grid_partition
from .fem import CoefficientField, MeshSpec, assemble
from .geneo import ThresholdSpec, build_coarse
from .krylov import pcg
from .linalg import SparseSymMatrix
from .precond import PreconditionerConfig, build_preconditioner

__version__ = "0.1.0"

__all__ = ["BACKEND", "CoefficientField", "MeshSpec", "Partition", "PreconditionerConfig",
           "SparseSymMatrix", "SplitOperator", "ThresholdSpec", "assemble", "build_coarse",
           "build_pou", "build_preconditioner", "grid_partition", "pcg"]
