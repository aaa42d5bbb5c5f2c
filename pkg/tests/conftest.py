import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from serrin2ph.spectral_geometry import AngularField, GeometrySpec
from serrin2ph.twophase_solver import Conductivity, Resolution, solve_state

settings.register_profile(
    "default",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")

# cheaper grid for tests whose tolerance does not pin the default resolution
SMALL = Resolution(K=16, n_inner=16, n_outer=20)


@pytest.fixture(scope="session")
def small():
    return SMALL


@pytest.fixture(scope="session")
def disk():
    return GeometrySpec.concentric(0.5)


@pytest.fixture(scope="session")
def disk_state(disk):
    return solve_state(disk, Conductivity(1.0))


@pytest.fixture(scope="session")
def two_phase_state(disk):
    return solve_state(disk, Conductivity(2.0))


@pytest.fixture(scope="session")
def small_two_phase_state(disk):
    return solve_state(disk, Conductivity(2.0), SMALL)


def random_field(rng, K, amplitude):
    """Random field with sup norm at most ``amplitude`` and decaying modes."""
    c = rng.uniform(-1, 1, 2 * K + 1)
    c[0] = 0.0
    c /= np.arange(1, 2 * K + 2) ** 0.5
    c *= amplitude / np.sum(np.abs(c))
    return AngularField(c)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
