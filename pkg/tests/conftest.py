import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import HealthCheck, settings

from awg.dd import Partition, SplitOperator, build_pou, grid_partition
from awg.fem import CoefficientField, MeshSpec, assemble
from awg.linalg import SparseSymMatrix

settings.register_profile("awg", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("awg")

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def record_acceptance(criterion, ok, detail):
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def laplacian_1d(n):
    M = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")
    return SparseSymMatrix.from_scipy(M)


def small_elasticity(width=2.0, height=2.0, h=0.25, nu=0.3, layered=False):
    coeff = CoefficientField.layers(6, 1e11, 1e7, nu) if layered else CoefficientField.constant(1.0, nu)
    system = assemble(MeshSpec(width, height, h), coeff)
    part = grid_partition(system.mesh, system.dof_map)
    return system, part


@pytest.fixture(scope="session")
def tiny_case():
    """2 x 2 unit squares with h = 1/4: n = 144, four subdomains."""
    system, part = small_elasticity()
    op = SplitOperator.build(system.A, part)
    return system, part, op, build_pou(part)


@pytest.fixture(scope="session")
def layered_case():
    """3 x 3 unit squares with h = 1/7 and six hard layers: n = 924."""
    system, part = small_elasticity(3.0, 3.0, 1 / 7, layered=True)
    op = SplitOperator.build(system.A, part)
    return system, part, op, build_pou(part)


@pytest.fixture
def chain():
    """Tridiagonal chain of length 4 with subdomains {0,1,2} and {2,3}."""
    return laplacian_1d(4), Partition(4, [[0, 1, 2], [2, 3]])
