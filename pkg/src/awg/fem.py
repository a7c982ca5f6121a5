"""Q1 finite elements for 2-D linear elasticity on uniform rectangular meshes.

Nodes are numbered row by row (x fastest), node ``k`` carries dofs ``2k``
(x displacement) and ``2k+1`` (y displacement). Both components on the edge
x = 0 are clamped and removed from the system.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .linalg import SparseSymMatrix

GRAVITY = (0.0, -9.81)
SIX_LAYER_BANDS = ((1 / 7, 2 / 7), (3 / 7, 4 / 7))
NINE_LAYER_BANDS = SIX_LAYER_BANDS + ((5 / 7, 6 / 7),)
THREE_LAYER_BANDS = ((1 / 7, 2 / 7),)


@dataclass(frozen=True)
class MeshSpec:
    """Uniform mesh of ``[0, width] x [0, height]`` with square elements of size h."""

    width: float
    height: float
    h: float

    def _count(self, length):
        q = Fraction(length).limit_denominator(10**6) / Fraction(self.h).limit_denominator(10**6)
        if q.denominator != 1 or q <= 0:
            raise ValueError(f"length {length} is not a positive multiple of h = {self.h}")
        return int(q)

    @property
    def nx(self) -> int:
        return self._count(self.width)

    @property
    def ny(self) -> int:
        return self._count(self.height)

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    def node_coords(self) -> np.ndarray:
        i = np.tile(np.arange(self.nx + 1), self.ny + 1)
        j = np.repeat(np.arange(self.ny + 1), self.nx + 1)
        return np.column_stack([i * self.h, j * self.h])


@dataclass(frozen=True)
class CoefficientField:
    """Young's modulus rule plus a constant Poisson ratio.

    With ``bands`` empty the modulus is ``E1`` everywhere. Otherwise an element
    whose centroid has fractional height ``y - floor(y)`` inside one of the
    closed bands gets ``E1`` and every other element gets ``E2``.
    """

    nu: float = 0.3
    E1: float = 1e11
    E2: float = 1e7
    bands: tuple = SIX_LAYER_BANDS

    def __post_init__(self):
        if not 0.0 < self.nu < 0.5:
            raise ValueError(f"Poisson ratio must lie in (0, 0.5), got {self.nu}")
        if self.E1 <= 0 or self.E2 <= 0:
            raise ValueError("Young's moduli must be positive")

    @classmethod
    def constant(cls, E, nu=0.3):
        return cls(nu=nu, E1=E, E2=E, bands=())

    @classmethod
    def layers(cls, count=6, E1=1e11, E2=1e7, nu=0.3):
        bands = {3: THREE_LAYER_BANDS, 6: SIX_LAYER_BANDS, 9: NINE_LAYER_BANDS}[count]
        return cls(nu=nu, E1=E1, E2=E2, bands=bands)


def coefficient_at(coeff: CoefficientField, centroid):
    """(E, nu) of the element with the given centroid."""
    if not coeff.bands:
        return coeff.E1, coeff.nu
    y = centroid[1]
    f = y - np.floor(y)
    hard = any(lo <= f <= hi for lo, hi in coeff.bands)
    return (coeff.E1 if hard else coeff.E2), coeff.nu


def lame(E, nu):
    """Shear modulus and first Lame parameter."""
    return E / (2 * (1 + nu)), E * nu / ((1 + nu) * (1 - 2 * nu))


def reference_stiffness(h):
    """Element matrices ``(K_mu, K_lam)`` of a square Q1 element of side h.

    The element stiffness is ``mu * K_mu + lam * K_lam``. Local node order is
    lower-left, lower-right, upper-right, upper-left; local dofs interleave x, y.
    """
    g = np.array([-1.0, 1.0]) / np.sqrt(3.0)
    xi = np.array([-1.0, 1.0, 1.0, -1.0])
    eta = np.array([-1.0, -1.0, 1.0, 1.0])
    D_mu = np.diag([2.0, 2.0, 1.0])  # 2 eps:eps in Voigt form with engineering shear
    D_lam = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
    w = (h / 2) ** 2
    K_mu = np.zeros((8, 8))
    K_lam = np.zeros((8, 8))
    for a in g:
        for b in g:
            dx = xi * (1 + b * eta) / 4 * (2 / h)
            dy = eta * (1 + a * xi) / 4 * (2 / h)
            B = np.zeros((3, 8))
            B[0, 0::2] = dx
            B[1, 1::2] = dy
            B[2, 0::2] = dy
            B[2, 1::2] = dx
            K_mu += w * B.T @ D_mu @ B
            K_lam += w * B.T @ D_lam @ B
    # exact symmetry so the assembled matrix is bitwise symmetric
    return 0.5 * (K_mu + K_mu.T), 0.5 * (K_lam + K_lam.T)


def element_stiffness(h, E, nu):
    mu, lam = lame(E, nu)
    K_mu, K_lam = reference_stiffness(h)
    K = mu * K_mu + lam * K_lam
    return 0.5 * (K + K.T)


def rigid_body_modes(h):
    """Two translations and the linearised rotation on the reference element."""
    x = np.array([0, h, h, 0.0])
    y = np.array([0, 0, h, h])
    R = np.zeros((8, 3))
    R[0::2, 0] = 1
    R[1::2, 1] = 1
    R[0::2, 2] = -y
    R[1::2, 2] = x
    return R


@dataclass
class AssembledSystem:
    """Stiffness matrix and load with the clamped dofs removed.

    ``dof_map[k]`` holds the free dof numbers of node k (x, y), -1 if clamped.
    """

    A: SparseSymMatrix
    b: np.ndarray
    dof_map: np.ndarray
    mesh: MeshSpec
    coeff: CoefficientField
    element_E: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.A.n


def assemble(mesh: MeshSpec, coeff: CoefficientField, load=GRAVITY) -> AssembledSystem:
    """Assemble the clamped elasticity system on ``mesh``."""
    nx, ny, h = mesh.nx, mesh.ny, mesh.h
    if nx < 1 or ny < 1:
        raise ValueError("mesh has no elements")
    K_mu, K_lam = reference_stiffness(h)
    ei = np.tile(np.arange(nx), ny)
    ej = np.repeat(np.arange(ny), nx)
    ll = ej * (nx + 1) + ei
    nodes = np.column_stack([ll, ll + 1, ll + nx + 2, ll + nx + 1])
    dofs = np.empty((len(ll), 8), dtype=np.int64)
    dofs[:, 0::2] = 2 * nodes
    dofs[:, 1::2] = 2 * nodes + 1
    E = np.array([coefficient_at(coeff, ((i + 0.5) * h, (j + 0.5) * h))[0]
                  for i, j in zip(ei, ej)])
    mu, lam = lame(E, coeff.nu)
    Ke = mu[:, None, None] * K_mu[None] + lam[:, None, None] * K_lam[None]
    rows = np.repeat(dofs, 8, axis=1).ravel()
    cols = np.tile(dofs, (1, 8)).ravel()
    n_all = 2 * mesh.n_nodes
    K = _sum_symmetric(rows, cols, Ke.ravel(), n_all)

    # consistent load of a constant body force: each element node gets h^2/4
    f = np.zeros(n_all)
    share = h * h / 4
    for c in range(2):
        if load[c] != 0.0:
            np.add.at(f, dofs[:, c::2].ravel(), load[c] * share)

    node_i = np.tile(np.arange(nx + 1), ny + 1)
    free_node = node_i > 0
    dof_map = -np.ones((mesh.n_nodes, 2), dtype=np.int64)
    nfree = int(free_node.sum())
    dof_map[free_node, 0] = 2 * np.arange(nfree)
    dof_map[free_node, 1] = 2 * np.arange(nfree) + 1
    free = np.flatnonzero(np.repeat(free_node, 2))
    A = SparseSymMatrix.from_scipy(K[free][:, free])
    return AssembledSystem(A=A, b=f[free], dof_map=dof_map, mesh=mesh, coeff=coeff,
                           element_E=E.reshape(ny, nx))


def _sum_symmetric(rows, cols, vals, n):
    """CSR matrix from element triplets, bitwise symmetric.

    Lower-triangle contributions are summed in element order and mirrored, so
    (i, j) and (j, i) hold the same float. Cancelled entries stay stored.
    """
    low = rows >= cols
    r, c, v = rows[low], cols[low], vals[low]
    order = np.lexsort((np.arange(len(r)), c, r))
    r, c, v = r[order], c[order], v[order]
    start = np.flatnonzero(np.r_[True, (r[1:] != r[:-1]) | (c[1:] != c[:-1])])
    seg = np.diff(np.r_[start, len(r)])
    acc = v[start].copy()
    for k in range(1, int(seg.max())):
        more = seg > k
        acc[more] = acc[more] + v[start[more] + k]
    r, c = r[start], c[start]
    off = r != c
    K = sp.csr_matrix((np.r_[acc, acc[off]], (np.r_[r, c[off]], np.r_[c, r[off]])), shape=(n, n))
    K.sort_indices()
    return K


def write_dof_map(path, system: AssembledSystem):
    """Sidecar text file: node, x, y, dof_x, dof_y (-1 for removed dofs)."""
    xy = system.mesh.node_coords()
    with open(path, "w") as fh:
        fh.write("# node x y dof_x dof_y\n")
        for k, ((x, y), (dx, dy)) in enumerate(zip(xy, system.dof_map)):
            fh.write(f"{k} {float(x)!r} {float(y)!r} {dx} {dy}\n")


def read_dof_map(path):
    data = np.loadtxt(path, comments="#", ndmin=2)
    return data[:, 1:3], data[:, 3:5].astype(np.int64)
