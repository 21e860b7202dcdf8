"""Shared fixtures. Expensive assemblies are built once per session."""
import numpy as np
import pytest

from gapforge.bounds import transition_order_scan
from gapforge.certificates import certificate_assembly
from gapforge.gap_operators import assemble
from gapforge.gluon_models import range_model, simplest
from gapforge.quadrature import radial_grid
from gapforge.solver import SolveConfig, solve, solver_assembly
from gapforge.spectral import critical_coupling, kernel_family

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def toy_grid():
    return radial_grid(1e-4, 1e3, 400)


@pytest.fixture(scope="session")
def toy_unit():
    """Simplest kernel at gamma_m = 1 (it is linear in gamma_m)."""
    return simplest(1.0)


@pytest.fixture(scope="session")
def toy_asm(toy_unit, toy_grid):
    return assemble(toy_unit, toy_grid, tail_correction=False)


@pytest.fixture(scope="session")
def range_grid():
    return radial_grid(1e-4, 18.0, 400)


@pytest.fixture(scope="session")
def toy_chiral():
    """Converged chiral solution of the simplest kernel at gamma_m = 1.1."""
    kern = simplest(1.1)
    grid = radial_grid(1e-4, 1e8, 560)
    cfg = SolveConfig(tol=1e-10)
    asm = solver_assembly(cfg, kern, grid)
    return kern, grid, cfg, asm, solve(cfg, kern, grid, asm)


@pytest.fixture(scope="session")
def toy_massive():
    """FiniteRenorm solution of the simplest kernel at gamma_m = 0.48, m = 0.1."""
    kern = simplest(0.48)
    grid = radial_grid(1e-4, 1e6, 400)
    cfg = SolveConfig("finite_renorm", 0.1, tol=1e-11)
    asm = solver_assembly(cfg, kern, grid)
    return kern, grid, cfg, asm, solve(cfg, kern, grid, asm)


@pytest.fixture(scope="session")
def range_critical(range_grid):
    """Bisection of lambda_max = 1 in D/omega^2 for the range model (Z = 1)."""
    fam = kernel_family(range_model(0.7), range_grid, "D_over_omega2")
    c, info = critical_coupling(fam, (0.5, 1.0))
    return c, info, fam(c)


@pytest.fixture(scope="session")
def toy_cert_11():
    grid = radial_grid(1e-4, 18.0, 400)
    return certificate_assembly(simplest(1.1), grid)


@pytest.fixture(scope="session")
def range_cert_asm():
    grid = radial_grid(1e-4, 18.0, 400)
    return {d: certificate_assembly(range_model(d), grid) for d in (0.5, 2.4, 3.0)}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


TRANSITION_GAMMAS = [round(0.74 + 0.02 * i, 2) for i in range(9)]


@pytest.fixture(scope="session")
def transition_scan(toy_grid):
    """Chiral amplitude vs gamma_m just above the toy critical point (A fixed to 1)."""
    return transition_order_scan(simplest(), toy_grid, "gamma_m", TRANSITION_GAMMAS,
                                 SolveConfig(fix_a=True), threads=4)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
