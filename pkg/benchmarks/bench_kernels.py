"""Compare the compiled kernels with the numpy fallback.

Run from the repository root after an editable install::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is fed identical inputs by both backends; the table lists the
best wall time over ``--repeat`` runs and the largest difference between
the two outputs.
"""
import argparse
import timeit

import numpy as np

from awg import _kernels_py as py
from awg.fem import CoefficientField, MeshSpec, assemble
from awg.linalg import JACOBI_MAX_SWEEPS, JACOBI_TOL

try:
    from awg import _kernels as cy
except ImportError:
    cy = None


def spd(n, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n))
    M = X @ X.T + n * np.eye(n)
    return np.ascontiguousarray(0.5 * (M + M.T))


def cases():
    A = assemble(MeshSpec(3.0, 3.0, 1 / 21), CoefficientField.layers(6, 1e11, 1e7, 0.3)).A
    x = np.random.default_rng(1).standard_normal(A.n)
    M60, M300 = spd(60), spd(300)
    L300 = np.linalg.cholesky(M300)
    b300 = np.ones(300)
    X = np.random.default_rng(2).standard_normal((300, 40))
    low_rank = np.ascontiguousarray(X @ X.T)
    return [
        (f"csr_matvec n={A.n}", "csr_matvec", (A.row_offsets, A.col_indices, A.values, x)),
        ("jacobi_eigh 60x60", "jacobi_eigh", (M60, JACOBI_TOL, JACOBI_MAX_SWEEPS)),
        ("cholesky_lower 300x300", "cholesky_lower", (M300,)),
        ("cholesky_solve_lower 300", "cholesky_solve_lower", (np.ascontiguousarray(L300), b300)),
        ("pivoted_cholesky 300 rank 40", "pivoted_cholesky", (low_rank, 1e-10)),
    ]


def first_array(out):
    return out[0] if isinstance(out, tuple) else out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if cy is None:
        print("compiled extension not built; only the fallback is timed")
    print(f"{'kernel':<30s} {'compiled [ms]':>14s} {'numpy [ms]':>12s} {'speedup':>8s} {'max diff':>10s}")
    for label, name, inputs in cases():
        t_py = min(timeit.repeat(lambda: getattr(py, name)(*inputs), number=1, repeat=args.repeat))
        if cy is None:
            print(f"{label:<30s} {'-':>14s} {1e3 * t_py:12.3f}")
            continue
        t_cy = min(timeit.repeat(lambda: getattr(cy, name)(*inputs), number=1, repeat=args.repeat))
        a, b = first_array(getattr(cy, name)(*inputs)), first_array(getattr(py, name)(*inputs))
        diff = float(np.abs(np.asarray(a) - np.asarray(b)).max())
        print(f"{label:<30s} {1e3 * t_cy:14.3f} {1e3 * t_py:12.3f} {t_py / t_cy:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
