import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pe_nudging.dynamics import ForcingSpec, SimParams, StateSnapshot, spin_up
from pe_nudging.grid import GridSpec, HVelocity, ops
from pe_nudging.hydrostatic import project_array

settings.register_profile(
    "default", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid():
    return GridSpec()


@pytest.fixture(scope="session")
def small_grid():
    return GridSpec(nx=16, ny=16, nz=9)


def random_velocity(grid, rng, compatible=True, band=True):
    """Random smooth velocity; compatible ones vanish at the bottom and satisfy the constraint."""
    o = ops(grid)
    a = rng.standard_normal((2,) + grid.shape)
    if band:
        a = o.dealias(a)
    if compatible:
        a[..., 0] = 0.0
        a = project_array(o, a, dirichlet_bottom=True)
    return a


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_flow(small_grid):
    """Spun-up forced flow on the small grid."""
    p = SimParams(grid=small_grid, dt=0.01, t_end=0.5, forcing=ForcingSpec(amplitude=0.2))
    su = spin_up(p, 1.0, amplitude=0.2)
    return p, StateSnapshot(su.state.t, su.state.v)


@pytest.fixture(scope="session")
def flow32(grid):
    """Spun-up Kolmogorov flow on the default grid (the base solution of the twin runs)."""
    p = SimParams(grid=grid, dt=0.01, t_end=1.0, forcing=ForcingSpec(amplitude=0.05))
    su = spin_up(p, 4.0, amplitude=0.05)
    return p, su


def hv(grid, data):
    return HVelocity(grid, data)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
