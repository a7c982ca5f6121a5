import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from awg.dd import Partition, SplitOperator, build_pou
from awg.geneo import (CoarseSpace, ThresholdSpec, apply_projector, build_coarse, coarse_correct,
                       coarse_from_basis, select_YH, select_YL)

from conftest import laplacian_1d


def pencil_with(eigs, seed=0):
    """(MA, MB) with prescribed pencil eigenvalues and a random spd MB."""
    rng = np.random.default_rng(seed)
    m = len(eigs)
    X = rng.standard_normal((m, m)) + m * np.eye(m)
    # congruence keeps the pencil spectrum: MA = X diag X^T, MB = X X^T
    MB = X @ X.T
    MA = (X * np.asarray(eigs, dtype=float)) @ X.T
    return 0.5 * (MA + MA.T), 0.5 * (MB + MB.T)


# ---------------------------------------------------------------------------
# threshold spec

def test_threshold_ranges():
    ThresholdSpec("NN", tau_sharp=0.1)
    ThresholdSpec("AS", 0.1, 10.0)
    with pytest.raises(ValueError):
        ThresholdSpec("NN", tau_sharp=1.0)
    with pytest.raises(ValueError):
        ThresholdSpec("AS_PLUS", tau_flat=1.0)
    with pytest.raises(ValueError):
        ThresholdSpec("AS", tau_sharp=0.1)
    with pytest.raises(ValueError):
        ThresholdSpec("GenEO", tau_sharp=0.1)


# ---------------------------------------------------------------------------
# selection

def test_select_below_spectrum():
    MA, MB = pencil_with([1.0, 2.0, 3.0])
    Y, _ = select_YL(0.5, MA, MB)
    assert Y.shape == (3, 0)


def test_select_zero_left():
    MB = pencil_with([1.0, 1.0, 1.0, 1.0])[1]
    Y, w = select_YL(1e-3, np.zeros((4, 4)), MB)
    assert Y.shape == (4, 4)
    assert np.allclose(Y.T @ MB @ Y, np.eye(4), atol=1e-12)


def test_select_cutoff():
    MA, MB = pencil_with([0.0, 0.05, 0.5, 2.0])
    Y, w = select_YL(0.1, MA, MB)
    assert Y.shape[1] == 2
    assert np.allclose(w, [0.0, 0.05, 0.5, 2.0], atol=1e-12)
    assert np.allclose(MA @ Y, MB @ Y * w[:2], atol=1e-10 * np.abs(MA).max())
    Yh, _ = select_YH(0.1, MA, MB)
    assert Yh.shape[1] == 2


def test_select_tie_excluded():
    Y, _ = select_YL(0.5, np.diag([0.25, 0.5, 1.0]), np.eye(3))
    assert Y.shape[1] == 1


@given(st.lists(st.floats(0.0, 5.0), min_size=1, max_size=8), st.floats(0.01, 5.0))
def test_select_partition_of_spectrum(eigs, tau):
    MA, MB = pencil_with(eigs)
    YL, w = select_YL(tau, MA, MB)
    YH, _ = select_YH(tau, MA, MB)
    assert YL.shape[1] + YH.shape[1] == len(eigs)
    assert np.all(w[: YL.shape[1]] < tau) and np.all(w[YL.shape[1]:] >= tau)


# ---------------------------------------------------------------------------
# coarse spaces on the splitting

def nn_dims(op, pou, taus):
    return [build_coarse(ThresholdSpec("NN", tau_sharp=t), op, pou).dim for t in taus]


def test_monotone_in_tau(tiny_case):
    _, _, op, pou = tiny_case
    dims = nn_dims(op, pou, [1e-9, 0.01, 0.05, 0.1, 0.2, 0.5, 0.9])
    assert dims == sorted(dims)


@given(st.floats(1e-6, 0.95), st.floats(1e-6, 0.95))
def test_monotone_property(tiny_case, t1, t2):
    _, _, op, pou = tiny_case
    lo, hi = sorted((t1, t2))
    d1, d2 = nn_dims(op, pou, [lo, hi])
    assert d1 <= d2


def test_kernel_modes_only(tiny_case):
    _, _, op, pou = tiny_case
    cs = build_coarse(ThresholdSpec("NN", tau_sharp=1e-9), op, pou)
    assert cs.counts == [ls.n_neg for ls in op.splits]
    assert cs.dim >= op.n_minus


def test_spd_blocks_empty_coarse():
    A = laplacian_1d(4)
    part = Partition(4, [[0, 1, 2], [2, 3]])
    op = SplitOperator.build(A, part)
    cs = build_coarse(ThresholdSpec("NN", tau_sharp=1e-9), op, build_pou(part))
    assert cs.dim == 0
    x = np.arange(4.0)
    assert np.array_equal(cs.correct(x), np.zeros(4))
    assert np.array_equal(cs.project(x), x)


@pytest.mark.parametrize("spec", [ThresholdSpec("NN", tau_sharp=0.1),
                                  ThresholdSpec("AS_PLUS", tau_flat=10.0)])
def test_kernel_modes_in_range(tiny_case, spec):
    _, part, op, pou = tiny_case
    cs = build_coarse(spec, op, pou)
    for o, d, ls in zip(part.omega, pou.D, op.splits):
        for k in range(ls.n_neg):
            v = np.zeros(op.n)
            v[o] = d * ls.V_neg[:, k]
            c, *_ = np.linalg.lstsq(cs.Z, v, rcond=None)
            assert np.linalg.norm(cs.Z @ c - v) <= 1e-8 * np.linalg.norm(v)


def test_as_union(tiny_case):
    _, _, op, pou = tiny_case
    cs = build_coarse(ThresholdSpec("AS", 0.1, 10.0), op, pou)
    for spec, c in zip(cs.spectra, cs.counts):
        assert c == int(np.sum(spec["pencil"] < 0.1)) + int(np.sum(spec["pencil2"] < 0.1))


# ---------------------------------------------------------------------------
# corrections and projectors

@pytest.fixture(scope="module")
def nn_space(tiny_case):
    _, _, op, pou = tiny_case
    return op, build_coarse(ThresholdSpec("NN", tau_sharp=0.1), op, pou)


def test_correct_orthogonal(nn_space):
    op, cs = nn_space
    rng = np.random.default_rng(0)
    x = rng.standard_normal(op.n)
    Q, _ = np.linalg.qr(cs.Z)
    x -= Q @ (Q.T @ x)
    assert np.abs(coarse_correct(cs, x)).max() <= 1e-10 * np.abs(cs.correct(rng.standard_normal(op.n))).max()


def test_full_space_limit(tiny_case):
    _, _, op, _ = tiny_case
    cs = coarse_from_basis(np.eye(op.n), op.apply_Aplus)
    x = np.random.default_rng(1).standard_normal(op.n)
    ref = np.linalg.solve(op.Aplus_dense(), x)
    assert np.allclose(cs.correct(x), ref, rtol=1e-8, atol=1e-8 * np.abs(ref).max())


def test_correct_symmetric(nn_space):
    op, cs = nn_space
    rng = np.random.default_rng(2)
    for _ in range(10):
        x, y = rng.standard_normal((2, op.n))
        a, b = y @ cs.correct(x), x @ cs.correct(y)
        assert abs(a - b) <= 1e-12 * max(abs(a), np.linalg.norm(cs.correct(x)) * np.linalg.norm(y))


def test_projector(nn_space):
    op, cs = nn_space
    rng = np.random.default_rng(3)
    z = cs.Z @ rng.standard_normal(cs.dim)
    assert np.linalg.norm(apply_projector(cs, z)) <= 1e-8 * np.linalg.norm(z)
    for _ in range(10):
        x = rng.standard_normal(op.n)
        Px = apply_projector(cs, x)
        assert np.linalg.norm(apply_projector(cs, Px) - Px) <= 1e-10 * np.linalg.norm(x)
        PTx = apply_projector(cs, x, transpose=True)
        y = rng.standard_normal(op.n)
        assert y @ PTx == pytest.approx(apply_projector(cs, y) @ x, rel=1e-10, abs=1e-10 * np.linalg.norm(x))


def test_projector_empty():
    cs = coarse_from_basis(np.zeros((5, 0)), lambda Z: Z)
    x = np.arange(5.0)
    assert isinstance(cs, CoarseSpace)
    assert np.array_equal(apply_projector(cs, x), x)
    assert np.array_equal(apply_projector(cs, x, transpose=True), x)


def test_coarse_operator_residual(nn_space):
    op, cs = nn_space
    E0 = cs.Z.T @ cs.MZ
    rng = np.random.default_rng(4)
    b = rng.standard_normal(cs.dim)
    r = cs.K0.retained
    x = cs.K0.solve(b)
    sub = E0[np.ix_(r, r)]
    assert np.linalg.norm(sub @ x[r] - b[r]) <= 1e-10 * np.linalg.norm(b) * np.linalg.cond(sub)
