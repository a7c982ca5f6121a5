"""Subdomain structure and the algebraic splitting A = A+ - A-.

A :class:`Partition` lists overlapping index sets. ``build_Bs`` divides every
stored entry of A by the number of subdomains that contain both its row and
its column and restricts the result to each subdomain. The eigendecomposition
of each local block B^s splits it into a positive part and a non-positive
part; summing the non-positive parts gives A-, and A+ = A + A-.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .linalg import SparseSymMatrix, dense_sym_eig


class OverlapError(ValueError):
    """Some stored entry A_ij has no subdomain containing both i and j."""

    def __init__(self, pairs):
        self.pairs = pairs
        head = ", ".join(f"({i},{j})" for i, j in pairs[:5])
        super().__init__(f"minimal overlap violated by {len(pairs)} pairs: {head}")


# ---------------------------------------------------------------------------
# partitions

@dataclass(eq=False)
class Partition:
    """Overlapping index sets omega[s] covering 0..n-1."""

    n: int
    omega: list

    def __post_init__(self):
        self.omega = [np.asarray(o, dtype=np.int64) for o in self.omega]
        for s, o in enumerate(self.omega):
            if len(o) == 0:
                raise ValueError(f"subdomain {s} is empty")
            if np.any(np.diff(o) <= 0):
                raise ValueError(f"subdomain {s} is not sorted and duplicate free")
            if o[0] < 0 or o[-1] >= self.n:
                raise ValueError(f"subdomain {s} has indices outside 0..{self.n - 1}")
        missing = np.flatnonzero(self.multiplicity() == 0)
        if len(missing):
            raise ValueError(f"dofs not covered by any subdomain: {missing[:10].tolist()}"
                             + (" ..." if len(missing) > 10 else ""))

    @property
    def N(self) -> int:
        return len(self.omega)

    def sizes(self):
        return [len(o) for o in self.omega]

    def multiplicity(self) -> np.ndarray:
        mu = np.zeros(self.n, dtype=np.int64)
        for o in self.omega:
            mu[o] += 1
        return mu

    def indicator(self, s) -> np.ndarray:
        ind = np.zeros(self.n, dtype=bool)
        ind[self.omega[s]] = True
        return ind

    def restrict(self, s, x):
        return x[self.omega[s]]

    def write(self, path):
        with open(path, "w") as fh:
            for o in self.omega:
                fh.write(" ".join(str(int(i)) for i in o) + "\n")

    @classmethod
    def read(cls, path, n=None) -> "Partition":
        omega = []
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    omega.append(np.array(sorted({int(t) for t in line.split()}), dtype=np.int64))
        if n is None:
            n = max(int(o[-1]) for o in omega) + 1
        return cls(n, omega)


@dataclass
class PartitionOfUnity:
    multiplicity: np.ndarray
    D: list  # D[s]: diagonal entries 1/mu on omega[s]

    def Dinv(self, s):
        return 1.0 / self.D[s]


def build_pou(partition: Partition) -> PartitionOfUnity:
    mu = partition.multiplicity()
    if np.any(mu == 0):
        raise ValueError(f"uncovered dof {int(np.flatnonzero(mu == 0)[0])}")
    return PartitionOfUnity(mu, [1.0 / mu[o] for o in partition.omega])


def grid_partition(mesh, dof_map, sub_w=1.0, sub_h=1.0) -> Partition:
    """Closed rectangles of size sub_w x sub_h, ordered x fastest.

    Nodes on a shared edge or corner belong to every touching rectangle.
    """
    nx, ny = mesh.nx, mesh.ny
    px = _cells(sub_w, mesh.h)
    py = _cells(sub_h, mesh.h)
    if nx % px or ny % py:
        raise ValueError(f"subdomains of {px}x{py} elements do not tile a {nx}x{ny} mesh")
    omega = []
    for by in range(ny // py):
        for bx in range(nx // px):
            ii, jj = np.meshgrid(np.arange(bx * px, (bx + 1) * px + 1),
                                 np.arange(by * py, (by + 1) * py + 1))
            nodes = (jj * (nx + 1) + ii).ravel()
            d = dof_map[nodes].ravel()
            omega.append(np.sort(d[d >= 0]))
    n = int(dof_map.max()) + 1
    return Partition(n, omega)


def _cells(length, h):
    q = Fraction(length).limit_denominator(10**6) / Fraction(h).limit_denominator(10**6)
    if q.denominator != 1 or q <= 0:
        raise ValueError(f"subdomain size {length} is not a multiple of h = {h}")
    return int(q)


def bfs_partition(A: SparseSymMatrix, N: int) -> Partition:
    """Greedy breadth-first partition of the adjacency graph into N parts,
    then grown so every stored coupling lies inside some part.

    Parts are grown one at a time from the lowest unassigned index until they
    reach ceil(n/N) vertices. For a coupling (i, j) whose endpoints end up in
    different parts, j is added to the part owning i when that part has the
    lower number (and i to the part of j otherwise).
    """
    n = A.n
    if not 1 <= N <= n:
        raise ValueError(f"cannot split {n} dofs into {N} parts")
    ptr, idx = A.row_offsets, A.col_indices
    owner = -np.ones(n, dtype=np.int64)
    target = -(-n // N)
    nxt = 0
    for s in range(N):
        while nxt < n and owner[nxt] >= 0:
            nxt += 1
        if nxt >= n:
            break
        quota = target if s < N - 1 else n
        queue = deque([nxt])
        owner[nxt] = s
        count = 1
        while queue and count < quota:
            i = queue.popleft()
            for j in idx[ptr[i]:ptr[i + 1]]:
                if owner[j] < 0 and count < quota:
                    owner[j] = s
                    count += 1
                    queue.append(j)
        # a disconnected remainder is picked up by the next part
    rest = np.flatnonzero(owner < 0)
    owner[rest] = N - 1
    rows = A.rows()
    cols = idx
    cross = owner[rows] != owner[cols]
    sets = [set(np.flatnonzero(owner == s).tolist()) for s in range(N)]
    for i, j in zip(rows[cross], cols[cross]):
        si, sj = owner[i], owner[j]
        if si < sj:
            sets[si].add(int(j))
        else:
            sets[sj].add(int(i))
    omega = [np.array(sorted(S), dtype=np.int64) for S in sets if S]
    part = Partition(n, omega)
    bad = check_minimal_overlap(A, part)
    if bad:
        raise OverlapError(bad)
    return part


# ---------------------------------------------------------------------------
# pattern based structure

def pair_multiplicity(A: SparseSymMatrix, partition: Partition) -> np.ndarray:
    """M_mu on the stored pattern of A, aligned with ``A.values``."""
    rows = A.rows()
    cols = A.col_indices
    mu = np.zeros(A.nnz, dtype=np.int64)
    for s in range(partition.N):
        ind = partition.indicator(s)
        mu += ind[rows] & ind[cols]
    return mu


def check_minimal_overlap(A: SparseSymMatrix, partition: Partition):
    """Stored pairs (i, j) not contained in any subdomain; empty list means ok."""
    mu = pair_multiplicity(A, partition)
    bad = np.flatnonzero(mu == 0)
    rows = A.rows()
    return [(int(rows[k]), int(A.col_indices[k])) for k in bad]


def subdomain_graph(A: SparseSymMatrix, partition: Partition, dense_blocks=()):
    """Adjacency sets of the subdomain interaction graph.

    s and t interact when a stored entry couples a dof of omega[s] to a dof of
    omega[t]. ``dense_blocks`` adds index sets on which the operator is treated
    as full (the support of the local parts of A-).
    """
    N = partition.N
    member = [[] for _ in range(partition.n)]
    for s, o in enumerate(partition.omega):
        for i in o:
            member[i].append(s)
    rows = A.rows()
    cols = A.col_indices
    adj = [set() for _ in range(N)]
    # pairs of dof-subdomain lists touching through a stored entry
    seen = set()
    for i, j in zip(rows, cols):
        key = (tuple(member[i]), tuple(member[j]))
        if key in seen:
            continue
        seen.add(key)
        for s in member[i]:
            adj[s].update(member[j])
    for blk in dense_blocks:
        touched = set()
        for i in blk:
            touched.update(member[i])
        for s in touched:
            adj[s].update(touched)
    for s in range(N):
        adj[s].discard(s)
    return adj


def coloring_constant(A: SparseSymMatrix, partition: Partition, dense_blocks=()):
    """Greedy colouring of the subdomain interaction graph.

    Returns ``(n_colors, colors)``. Subdomains with the same colour do not
    interact, so ``n_colors`` is an upper bound for the colouring constant.
    """
    adj = subdomain_graph(A, partition, dense_blocks)
    colors = -np.ones(partition.N, dtype=np.int64)
    for s in range(partition.N):
        used = {colors[t] for t in adj[s] if colors[t] >= 0}
        c = 0
        while c in used:
            c += 1
        colors[s] = c
    return int(colors.max()) + 1, colors


def build_Bs(A: SparseSymMatrix, partition: Partition):
    """Local blocks B^s of the multiplicity-weighted splitting, as dense arrays."""
    mu = pair_multiplicity(A, partition)
    if np.any(mu == 0):
        raise OverlapError(check_minimal_overlap(A, partition))
    B = SparseSymMatrix(A.n, A.row_offsets, A.col_indices, A.values / mu)
    return [B.submatrix(o) for o in partition.omega]


# ---------------------------------------------------------------------------
# local eigensplit

@dataclass(eq=False)
class LocalSplit:
    """Eigendecomposition of B^s and its split at ``eps_zero``.

    ``neg`` marks eigenvalues <= eps_zero (zero modes included); ``strict``
    marks those < -eps_zero, which are the ones that enter the second coarse
    space.
    """

    s: int
    Bs: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    eps_zero: float

    @property
    def neg(self):
        return self.eigenvalues <= self.eps_zero

    @property
    def pos(self):
        return ~self.neg

    @property
    def strict(self):
        return self.eigenvalues < -self.eps_zero

    @property
    def V_neg(self):
        return self.eigenvectors[:, self.neg]

    @property
    def L_neg(self):
        return self.eigenvalues[self.neg]

    @property
    def V_pos(self):
        return self.eigenvectors[:, self.pos]

    @property
    def L_pos(self):
        return self.eigenvalues[self.pos]

    @property
    def n_neg(self) -> int:
        return int(self.neg.sum())

    @property
    def n_strict(self) -> int:
        return int(self.strict.sum())

    def Aplus_local(self):
        """A^s_+ = V+ diag(lam+) V+^T as a dense matrix."""
        V = self.V_pos
        return (V * self.L_pos) @ V.T

    def Aminus_local(self):
        V = self.V_neg
        return (V * -self.L_neg) @ V.T


def eigsplit(Bs, s=0, method="auto") -> LocalSplit:
    """Split B^s into positive and non-positive eigen-parts."""
    w, V = dense_sym_eig(Bs, method=method)
    scale = np.abs(w).max() if len(w) else 0.0
    eps = 1e-12 * scale * len(w)
    return LocalSplit(s=s, Bs=np.asarray(Bs), eigenvalues=w, eigenvectors=V, eps_zero=eps)


class SplitOperator:
    """A, A- and A+ in operator form for a partition with local splits.

    A+ is never assembled. Applies accept vectors or n x k blocks.
    """

    def __init__(self, A: SparseSymMatrix, partition: Partition, splits):
        self.A = A
        self.partition = partition
        self.splits = list(splits)
        self._As = A.to_scipy()
        self._blocks = {}
        # neighbour lists: t touches s when the index sets intersect
        N = partition.N
        mult = [[] for _ in range(partition.n)]
        for s, o in enumerate(partition.omega):
            for i in o:
                mult[i].append(s)
        self.neighbors = []
        for s, o in enumerate(partition.omega):
            nb = set()
            for i in o:
                nb.update(mult[i])
            self.neighbors.append(sorted(nb))
        self._neg = [(ls.V_neg, -ls.L_neg) for ls in self.splits]
        assert len(self.splits) == N

    @classmethod
    def build(cls, A, partition, method="auto"):
        Bs = build_Bs(A, partition)
        return cls(A, partition, [eigsplit(B, s, method) for s, B in enumerate(Bs)])

    @property
    def n(self):
        return self.A.n

    @property
    def n_minus(self) -> int:
        """Number of strictly negative local eigenvalues (rank of A-)."""
        return sum(s.n_strict for s in self.splits)

    def apply_A(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.A.matvec(x)
        return self._As @ x

    def apply_Aminus(self, x):
        x = np.asarray(x, dtype=float)
        y = np.zeros_like(x)
        for o, (V, lam) in zip(self.partition.omega, self._neg):
            if V.shape[1]:
                c = V.T @ x[o]
                c = lam[:, None] * c if c.ndim == 2 else lam * c
                y[o] += V @ c
        return y

    def apply_Aplus(self, x):
        return self.apply_A(x) + self.apply_Aminus(x)

    def local_A_block(self, s):
        return self.A.submatrix(self.partition.omega[s])

    def local_Aplus_block(self, s):
        """Dense R^s A+ R^sT from R^s A R^sT and the neighbours' negative parts."""
        if s in self._blocks:
            return self._blocks[s]
        o = self.partition.omega[s]
        blk = self.local_A_block(s)
        for t in self.neighbors[s]:
            V, lam = self._neg[t]
            if not V.shape[1]:
                continue
            _, ia, ib = np.intersect1d(o, self.partition.omega[t], assume_unique=True,
                                       return_indices=True)
            Vt = V[ib]
            blk[np.ix_(ia, ia)] += (Vt * lam) @ Vt.T
        blk = 0.5 * (blk + blk.T)
        self._blocks[s] = blk
        return blk

    def local_Aplus_pinv_apply(self, s, v):
        """(A^s_+)^+ v through the eigendecomposition of B^s."""
        ls = self.splits[s]
        V = ls.V_pos
        c = V.T @ v
        c = c / ls.L_pos[:, None] if c.ndim == 2 else c / ls.L_pos
        return V @ c

    def Aplus_dense(self):
        """Densified A+ (small problems and tests only)."""
        M = self.A.toarray()
        for o, (V, lam) in zip(self.partition.omega, self._neg):
            M[np.ix_(o, o)] += (V * lam) @ V.T
        return M

    def Aminus_dense(self):
        M = np.zeros((self.n, self.n))
        for o, (V, lam) in zip(self.partition.omega, self._neg):
            M[np.ix_(o, o)] += (V * lam) @ V.T
        return M

    def coloring_constant_plus(self):
        """Greedy colouring bound for A+ (pattern of A plus the A- supports)."""
        blocks = [o for o, (V, _) in zip(self.partition.omega, self._neg) if V.shape[1]]
        return coloring_constant(self.A, self.partition, blocks)
