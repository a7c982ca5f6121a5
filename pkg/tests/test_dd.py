import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from awg.dd import (OverlapError, Partition, SplitOperator, bfs_partition, build_Bs, build_pou,
                    check_minimal_overlap, coloring_constant, eigsplit, grid_partition,
                    pair_multiplicity)
from awg.fem import CoefficientField, MeshSpec, assemble
from awg.linalg import SparseSymMatrix

from conftest import laplacian_1d


def brute_violations(M, omega):
    out = []
    for i, j in zip(*np.nonzero(M)):
        if not any(i in o and j in o for o in map(set, omega)):
            out.append((int(i), int(j)))
    return sorted(out)


def random_sym(rng, n, density):
    M = sp.random(n, n, density=density, random_state=rng.integers(2**31)).toarray()
    M = M + M.T + np.diag(np.full(n, 5.0))
    return M


# ---------------------------------------------------------------------------
# partitions

def test_partition_validation():
    with pytest.raises(ValueError, match="not covered"):
        Partition(4, [[0, 1], [3]])
    with pytest.raises(ValueError, match="sorted"):
        Partition(3, [[1, 0, 2]])
    with pytest.raises(ValueError, match="empty"):
        Partition(2, [[0, 1], []])
    with pytest.raises(ValueError, match="outside"):
        Partition(2, [[0, 1, 2]])


def test_partition_file_roundtrip(tmp_path):
    p = Partition(5, [[0, 1, 2], [2, 3, 4]])
    p.write(tmp_path / "p.txt")
    q = Partition.read(tmp_path / "p.txt", 5)
    assert all(np.array_equal(a, b) for a, b in zip(p.omega, q.omega))


def test_grid_partition_headline():
    system = assemble(MeshSpec(3, 3, 1 / 21), CoefficientField.layers())
    part = grid_partition(system.mesh, system.dof_map)
    assert part.N == 9
    mu = part.multiplicity()
    assert mu.min() == 1 and set(np.unique(mu)) == {1, 2, 4}
    # dofs on more than one subdomain; clamped nodes are not counted
    assert int(np.sum(mu > 1)) == 500
    assert check_minimal_overlap(system.A, part) == []


def test_grid_partition_single():
    system = assemble(MeshSpec(1, 1, 1 / 4), CoefficientField.constant(1.0))
    part = grid_partition(system.mesh, system.dof_map)
    assert part.N == 1 and np.array_equal(part.omega[0], np.arange(system.n))


def test_grid_partition_bar_interface():
    h = 1 / 4
    system = assemble(MeshSpec(2, 1, h), CoefficientField.constant(1.0))
    part = grid_partition(system.mesh, system.dof_map)
    assert part.N == 2
    nodes = system.mesh.node_coords()
    iface = system.dof_map[np.isclose(nodes[:, 0], 1.0)].ravel()
    shared = np.intersect1d(part.omega[0], part.omega[1])
    assert np.array_equal(np.sort(iface), shared)


def test_grid_partition_not_tiling():
    system = assemble(MeshSpec(3, 3, 1 / 3), CoefficientField.constant(1.0))
    with pytest.raises(ValueError):
        grid_partition(system.mesh, system.dof_map, 2.0, 1.0)


# ---------------------------------------------------------------------------
# minimal overlap

def test_overlap_violation_chain():
    A = laplacian_1d(4)
    assert check_minimal_overlap(A, Partition(4, [[0, 1], [2, 3]])) == [(1, 2), (2, 1)]
    with pytest.raises(OverlapError) as err:
        build_Bs(A, Partition(4, [[0, 1], [2, 3]]))
    assert (1, 2) in err.value.pairs


@given(st.integers(0, 2**31))
def test_overlap_against_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 12))
    M = random_sym(rng, n, 0.3)
    N = int(rng.integers(1, 4))
    omega = [np.flatnonzero(rng.random(n) < 0.5) for _ in range(N)]
    omega[0] = np.union1d(omega[0], np.setdiff1d(np.arange(n), np.concatenate(omega)))
    omega = [o for o in omega if len(o)]
    A = SparseSymMatrix.from_dense(M)
    part = Partition(n, omega)
    bad = sorted(check_minimal_overlap(A, part))
    assert bad == brute_violations(M, omega)
    # the splitting exists exactly when minimal overlap holds
    if bad:
        with pytest.raises(OverlapError):
            build_Bs(A, part)
    else:
        build_Bs(A, part)


# ---------------------------------------------------------------------------
# partition of unity and colouring

def test_pou_identity(layered_case):
    _, part, _, pou = layered_case
    total = np.zeros(part.n)
    for o, d in zip(part.omega, pou.D):
        total[o] += d
    assert np.abs(total - 1.0).max() <= 1e-15


def test_pou_values():
    pou = build_pou(Partition(3, [[0, 1, 2]]))
    assert np.array_equal(pou.D[0], np.ones(3))
    pou = build_pou(Partition(4, [[0, 1, 2], [2, 3]]))
    assert pou.D[0][2] == 0.5 and pou.D[1][0] == 0.5


def test_pou_crosspoint(layered_case):
    system, part, _, pou = layered_case
    nodes = system.mesh.node_coords()
    k = int(np.flatnonzero(np.isclose(nodes[:, 0], 1) & np.isclose(nodes[:, 1], 1))[0])
    dof = system.dof_map[k, 0]
    for o, d in zip(part.omega, pou.D):
        if dof in o:
            assert d[np.searchsorted(o, dof)] == 0.25


def test_coloring_trivial_and_chain():
    A = laplacian_1d(9)
    assert coloring_constant(A, Partition(9, [np.arange(9)]))[0] == 1
    chain = Partition(9, [[0, 1, 2], [2, 3, 4], [4, 5, 6], [6, 7, 8]])
    n_colors, colors = coloring_constant(A, chain)
    assert n_colors == 2
    assert colors.tolist() == [0, 1, 0, 1]


def test_coloring_grid(layered_case):
    system, part, op, _ = layered_case
    n_colors, colors = coloring_constant(system.A, part)
    assert n_colors <= 4
    adj = [set() for _ in range(part.N)]
    M = system.A.to_scipy()
    for s, t in itertools.combinations(range(part.N), 2):
        if M[part.omega[s]][:, part.omega[t]].nnz:
            adj[s].add(t)
            adj[t].add(s)
            assert colors[s] != colors[t]
    # A+ couples everything touched by the supports of the local A- parts
    assert op.coloring_constant_plus()[0] >= n_colors


# ---------------------------------------------------------------------------
# splitting

def test_Bs_chain(chain):
    A, part = chain
    B1, B2 = build_Bs(A, part)
    assert np.array_equal(B1, [[2, -1, 0], [-1, 2, -1], [0, -1, 1]])
    assert np.array_equal(B2, [[1, -1], [-1, 2]])


def test_Bs_single():
    A = laplacian_1d(5)
    (B,) = build_Bs(A, Partition(5, [np.arange(5)]))
    assert np.array_equal(B, A.toarray())


def splitting_residual(A, part):
    total = np.zeros((A.n, A.n))
    for o, B in zip(part.omega, build_Bs(A, part)):
        total[np.ix_(o, o)] += B
    M = A.toarray()
    return np.abs(M - total).max() / np.abs(M).max()


def test_splitting_identity(layered_case, tiny_case):
    for system, part, _, _ in (layered_case, tiny_case):
        assert splitting_residual(system.A, part) <= 1e-15


def test_pair_multiplicity_counts_stored_zeros():
    M = sp.csr_matrix((np.array([2.0, 0.0, 0.0, 2.0]), np.array([0, 1, 0, 1]),
                       np.array([0, 2, 4])), shape=(2, 2))
    A = SparseSymMatrix.from_scipy(M)
    part = Partition(2, [[0, 1], [0, 1]])
    assert pair_multiplicity(A, part).tolist() == [2, 2, 2, 2]


def test_eigsplit_examples():
    ls = eigsplit(np.diag([1.0, -2.0]))
    assert ls.L_neg.tolist() == [-2.0]
    assert np.allclose(np.abs(ls.V_neg[:, 0]), [0, 1])
    assert eigsplit(np.diag([1.0, 3.0])).n_neg == 0
    # exact zeros go to the non-positive part but not to the strict one
    ls = eigsplit(np.diag([0.0, 1.0, -1.0]))
    assert ls.n_neg == 2 and ls.n_strict == 1


def test_local_split_invariants(layered_case):
    _, _, op, _ = layered_case
    for ls in op.splits:
        V = ls.V_neg
        assert np.abs(V.T @ V - np.eye(V.shape[1])).max() <= 1e-12 * max(1, V.shape[0])
        res = ls.Bs @ V - V * ls.L_neg
        assert np.abs(res).max() <= 1e-9 * np.abs(ls.Bs).max()


def test_operator_identity(layered_case):
    system, _, op, _ = layered_case
    rng = np.random.default_rng(0)
    X = rng.standard_normal((system.n, 100))
    normF = np.linalg.norm(system.A.values)
    diff = op.apply_Aplus(X) - op.apply_Aminus(X) - op.apply_A(X)
    assert np.all(np.linalg.norm(diff, axis=0) <= 1e-12 * normF * np.linalg.norm(X, axis=0))
    # vector and block applies agree
    assert np.allclose(op.apply_Aplus(X[:, 0]), op.apply_Aplus(X)[:, 0], rtol=1e-14)


def test_Aminus_spsd_and_rank(layered_case):
    _, part, op, _ = layered_case
    Am = op.Aminus_dense()
    w = np.linalg.eigvalsh(Am)
    scale = np.abs(w).max()
    assert w.min() >= -1e-12 * scale
    rank = int(np.sum(w > 1e-10 * scale))
    assert rank == op.n_minus
    assert rank <= sum(part.sizes()) - part.n
    rng = np.random.default_rng(1)
    X = rng.standard_normal((part.n, 1000))
    assert np.all(np.einsum("ij,ij->j", X, op.apply_Aminus(X)) >= -1e-12 * scale)


def test_spsd_blocks_give_zero_Aminus():
    A = laplacian_1d(6)
    part = Partition(6, [[0, 1, 2, 3], [3, 4, 5]])
    # the chain blocks are spsd (diagonally dominant), so A- vanishes
    op = SplitOperator.build(A, part)
    assert op.n_minus == 0
    x = np.arange(6.0)
    assert np.array_equal(op.apply_Aminus(x), np.zeros(6))
    assert np.array_equal(op.apply_Aplus(x), A.matvec(x))


def test_dense_Aplus_spd(tiny_case):
    import scipy.linalg as sla
    _, _, op, _ = tiny_case
    assert op.n_minus > 0
    sla.cholesky(op.Aplus_dense(), lower=True)


def test_local_Aplus_blocks(tiny_case):
    import scipy.linalg as sla
    _, part, op, _ = tiny_case
    Ap = op.Aplus_dense()
    for s, o in enumerate(part.omega):
        blk = op.local_Aplus_block(s)
        assert np.allclose(blk, Ap[np.ix_(o, o)], rtol=1e-13, atol=1e-13 * np.abs(Ap).max())
        sla.cholesky(blk, lower=True)


def test_local_Aplus_block_isolated():
    A = SparseSymMatrix.from_dense(np.diag([1.0, 2.0, 3.0]))
    op = SplitOperator.build(A, Partition(3, [[0, 1], [2]]))
    assert np.array_equal(op.local_Aplus_block(0), np.diag([1.0, 2.0]))


def test_pinv(tiny_case):
    _, _, op, _ = tiny_case
    rng = np.random.default_rng(2)
    for s, ls in enumerate(op.splits):
        Ap = ls.Aplus_local()
        X = rng.standard_normal((Ap.shape[0], 5))
        lhs = Ap @ op.local_Aplus_pinv_apply(s, Ap @ X)
        assert np.linalg.norm(lhs - Ap @ X) <= 1e-9 * np.linalg.norm(Ap @ X)
        if ls.n_neg:
            assert np.abs(op.local_Aplus_pinv_apply(s, ls.V_neg[:, 0])).max() <= 1e-10


def test_pinv_spd_block():
    M = np.array([[4.0, 1.0], [1.0, 3.0]])
    op = SplitOperator.build(SparseSymMatrix.from_dense(M), Partition(2, [[0, 1]]))
    v = np.array([1.0, -2.0])
    assert np.allclose(op.local_Aplus_pinv_apply(0, v), np.linalg.solve(M, v))


# ---------------------------------------------------------------------------
# automatic partition

def test_bfs_partition_chain():
    A = laplacian_1d(10)
    part = bfs_partition(A, 2)
    assert part.N == 2
    assert check_minimal_overlap(A, part) == []
    shared = np.intersect1d(part.omega[0], part.omega[1])
    assert len(shared) >= 1


@given(st.integers(0, 2**31), st.integers(1, 5))
def test_bfs_partition_random(seed, N):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(N, 30))
    A = SparseSymMatrix.from_dense(random_sym(rng, n, 0.15))
    part = bfs_partition(A, N)
    assert check_minimal_overlap(A, part) == []
    assert np.all(part.multiplicity() >= 1)
