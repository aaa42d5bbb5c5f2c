import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SMALL, random_field
from serrin2ph.errors import StepTooLarge
from serrin2ph.shape_calculus import (
    ParamVector,
    energy_pairing,
    fd_shape_derivative,
    functional_J,
    graph_from_curve,
    hadamard_derivative,
    residual_g,
    richardson,
    solve_shape_derivative,
    unsquared_residual,
)
from serrin2ph.spectral_geometry import AngularField, GeometrySpec
from serrin2ph.twophase_solver import Conductivity, solve_state

ONE = Conductivity(1.0)
TWO = Conductivity(2.0)


@pytest.fixture(scope="module")
def big_disk():
    """One-phase disk of radius 1.1."""
    geom = GeometrySpec.from_perturbations(0.5, AngularField.constant(0.1))
    return geom, solve_state(geom, ONE, SMALL)


@pytest.fixture(scope="module")
def wavy():
    geom = GeometrySpec.from_perturbations(
        0.5, AngularField(np.array([0.0, 0.01, 0.0, 0.04, 0.0, 0.0, 0.02])), AngularField.mode(2, amplitude=0.03)
    )
    return geom, solve_state(geom, TWO, SMALL)


def tangent_field(geom, weight):
    """theta -> weight(theta) * unit tangent of the outer boundary at angle theta."""
    radius = geom.outer_radius()

    def V(theta):
        r, rp = radius(theta), radius.derivative()(theta)
        er = np.stack([np.cos(theta), np.sin(theta)], -1)
        et = np.stack([-np.sin(theta), np.cos(theta)], -1)
        tau = rp[:, None] * er + r[:, None] * et
        return weight(theta)[:, None] * tau / np.linalg.norm(tau, axis=1)[:, None]

    return V


# -- functional and residual ------------------------------------------------------


def test_J_unit_disk(disk_state, disk):
    assert functional_J(disk, ONE, None, 0.5, sol=disk_state) == pytest.approx(-np.pi / 8, abs=1e-12)


def test_J_scaled_disk(big_disk):
    geom, sol = big_disk
    R = 1.1
    assert functional_J(geom, ONE, None, 0.5, sol=sol) == pytest.approx(np.pi * R**4 / 8 - np.pi * R**2 / 4, abs=1e-12)


def test_J_without_volume_term(wavy):
    geom, sol = wavy
    J = functional_J(geom, TWO, AngularField.constant(-0.5), 0.5, sol=sol)
    assert J > 0
    # torsional identity: int sigma |grad u|^2 = int u
    assert J == pytest.approx(sol.system.integrate(sol.inner_full(), sol.annulus_values), abs=1e-12)


def test_residual_vanishes_on_critical_bases(disk_state, two_phase_state):
    assert residual_g(disk_state, None, 0.5).sup_norm() < 1e-10
    assert residual_g(two_phase_state, None, 0.5).sup_norm() < 1e-10


def test_residual_with_constant_data(disk_state):
    g = residual_g(disk_state, AngularField.constant(0.01), 0.5)
    assert g.coefficients[0] == pytest.approx(0.25 - 0.51**2, abs=1e-12)
    assert np.max(np.abs(g.coefficients[1:])) < 1e-12
    u = unsquared_residual(disk_state, AngularField.constant(0.01), 0.5)
    assert u.coefficients[0] == pytest.approx(-0.01, abs=1e-12)


# -- Hadamard formula ---------------------------------------------------------------


def test_hadamard_vanishes_at_critical_base(small_two_phase_state):
    K = 6
    for j in range(2 * K + 1):
        e = np.zeros(2 * K + 1)
        e[j] = 1.0
        assert abs(hadamard_derivative(small_two_phase_state, None, 0.5, AngularField(e))) < 1e-9


def test_hadamard_scaled_disk(big_disk):
    geom, sol = big_disk
    R = 1.1
    value = hadamard_derivative(sol, None, 0.5, AngularField.constant(1.0))
    assert value == pytest.approx(np.pi * (R**3 - R) / 2, abs=1e-10)
    assert value == pytest.approx(2 * np.pi * R * (R**2 / 4 - 0.25), abs=1e-10)
    fd = fd_shape_derivative(geom, ONE, None, 0.5, AngularField.constant(1.0), resolution=SMALL)
    assert abs(fd.value - value) < 1e-6


def test_hadamard_ignores_tangential_fields(wavy):
    geom, sol = wavy
    V = tangent_field(geom, lambda t: 0.3 + np.cos(2 * t))
    assert abs(hadamard_derivative(sol, None, 0.5, V)) < 1e-12


def test_fd_of_tangential_reparametrisation(wavy):
    geom, _ = wavy
    V = tangent_field(geom, lambda t: 0.3 * np.sin(t))
    assert abs(fd_shape_derivative(geom, TWO, None, 0.5, V, resolution=SMALL).value) < 1e-9


def test_fd_equal_normal_traces_agree(wavy):
    geom, sol = wavy
    xi = AngularField(np.array([0.3, 0.5, 0.0, 1.0, 0.2, 0.0, 0.4]))
    tang = tangent_field(geom, lambda t: 0.2 * np.sin(t))

    def mixed(t):
        return xi(t)[:, None] * np.stack([np.cos(t), np.sin(t)], -1) + tang(t)

    a = fd_shape_derivative(geom, TWO, None, 0.5, xi, resolution=SMALL)
    b = fd_shape_derivative(geom, TWO, None, 0.5, mixed, resolution=SMALL)
    assert abs(a.value - b.value) < 1e-6
    assert abs(a.value - hadamard_derivative(sol, None, 0.5, xi)) < 1e-6


@settings(max_examples=3)
@given(st.integers(0, 2**32 - 1))
def test_hadamard_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    geom = GeometrySpec(random_field(rng, 4, 0.08), random_field(rng, 3, 0.05), 0.5)
    cond = Conductivity(rng.uniform(0.5, 3.0))
    direction = AngularField(rng.uniform(-1, 1, 9))
    f = random_field(rng, 3, 0.05)
    sol = solve_state(geom, cond, SMALL)
    had = hadamard_derivative(sol, f, 0.5, direction)
    fd = fd_shape_derivative(geom, cond, f, 0.5, direction, resolution=SMALL)
    assert abs(had - fd.value) <= 1e-6 * (1 + abs(had))


def test_fd_at_critical_base_is_small(disk):
    fd = fd_shape_derivative(disk, TWO, None, 0.5, AngularField.mode(3), resolution=SMALL)
    assert abs(fd.value) < 1e-9


def test_step_too_large():
    geom = GeometrySpec.from_perturbations(0.8, AngularField.constant(0.0))
    with pytest.raises(StepTooLarge):
        fd_shape_derivative(geom, TWO, None, 0.5, AngularField.constant(1.0), h_steps=(0.2,), resolution=SMALL)


def test_richardson_removes_h2_term():
    steps = [0.1, 0.05, 0.025]
    vals = [3.0 + 2 * h**2 - h**4 for h in steps]
    value, err = richardson(steps, vals)
    assert value == pytest.approx(3.0, abs=1e-13)


# -- shape derivative u' ------------------------------------------------------------------


@pytest.mark.parametrize("k", [0, 1, 2, 5, 9])
def test_shape_derivative_on_disk(disk, disk_state, k):
    up = solve_shape_derivative(disk, ONE, disk_state, AngularField.mode(k, K=12))
    expected = np.zeros(25)
    expected[0 if k == 0 else 2 * k - 1] = k / 2
    assert np.allclose(up.dn_u.resized(12).coefficients, expected, atol=1e-11)
    # interior: u' = (1/2) r^k cos k theta
    x, y = 0.3, -0.4
    r, t = np.hypot(x, y), np.arctan2(y, x)
    assert up.value_at(x, y)[0] == pytest.approx(0.5 * r**k * np.cos(k * t), abs=1e-11)


def test_shape_derivative_two_phase_mode2(disk, two_phase_state):
    up = solve_shape_derivative(disk, TWO, two_phase_state, AngularField.mode(2))
    assert up.dn_u.cos_coeff(2) == pytest.approx(49 / 47, abs=1e-11)
    assert np.abs(np.delete(up.dn_u.coefficients, 3)).max() < 1e-11


def test_zero_direction_gives_zero_field(wavy):
    geom, sol = wavy
    up = solve_shape_derivative(geom, TWO, sol, AngularField.zeros(3))
    assert not np.any(up.annulus_values) and not np.any(up.inner_values)


def test_energy_identity(wavy):
    geom, sol = wavy
    for xi in (AngularField.mode(3), AngularField(np.array([0.2, -0.1, 0.4, 0.3, 0.0]))):
        up = solve_shape_derivative(geom, TWO, sol, xi)
        assert abs(energy_pairing(sol, up)) < 1e-9


@settings(max_examples=10)
@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 2**32 - 1))
def test_shape_derivative_linearity(alpha, beta, seed):
    geom, sol = _wavy_state()
    rng = np.random.default_rng(seed)
    xi, eta = AngularField(rng.normal(size=11)), AngularField(rng.normal(size=11))
    lhs = solve_shape_derivative(geom, TWO, sol, xi * alpha + eta * beta).dn_nodes
    rhs = alpha * solve_shape_derivative(geom, TWO, sol, xi).dn_nodes + beta * solve_shape_derivative(
        geom, TWO, sol, eta
    ).dn_nodes
    assert np.max(np.abs(lhs - rhs)) < 1e-11 * (1 + np.max(np.abs(lhs)))


_cache = {}


def _wavy_state():
    # hypothesis tests cannot take module fixtures, so memoise by hand
    if "w" not in _cache:
        geom = GeometrySpec.from_perturbations(0.5, AngularField.mode(3, amplitude=0.03), AngularField.mode(1, amplitude=0.02))
        _cache["w"] = (geom, solve_state(geom, TWO, SMALL))
    return _cache["w"]


def test_criticality_characterisation(small_two_phase_state, wavy):
    """g = 0 exactly when the boundary integral vanishes along every basis direction."""
    K = 8
    basis = [AngularField(np.eye(2 * K + 1)[j]) for j in range(2 * K + 1)]
    crit = [hadamard_derivative(small_two_phase_state, None, 0.5, e) for e in basis]
    assert residual_g(small_two_phase_state, None, 0.5).sup_norm() < 1e-10
    assert max(map(abs, crit)) < 1e-9
    geom, sol = wavy
    noncrit = [hadamard_derivative(sol, None, 0.5, e) for e in basis]
    assert residual_g(sol, None, 0.5).sup_norm() > 1e-3
    assert max(map(abs, noncrit)) > 1e-3


# -- parameters and re-graphing ----------------------------------------------------------


def test_param_vector_geometry():
    base = GeometrySpec.concentric(0.5)
    lam = ParamVector(phi=AngularField.mode(2, amplitude=0.05), s=0.3, eta=(0.1, 0.0))
    geom = lam.geometry(base, AngularField.zeros(4))
    assert geom.outer_graph.cos_coeff(1) == pytest.approx(0.1)
    assert geom.inclusion_graph.cos_coeff(2) == pytest.approx(0.05)
    assert lam.conductivity(Conductivity(2.0)).inner == pytest.approx(2.3)
    assert ParamVector().is_zero and not lam.is_zero
    half = lam.scaled(0.5)
    assert half.s == pytest.approx(0.15) and half.eta == (0.05, 0.0)


def test_graph_from_shifted_parametrisation():
    R = AngularField(np.array([0.0, 0.05, 0.0, 0.03, -0.02]))

    def curve(t):
        u = t + 0.2 * np.sin(t)  # reparametrised
        r = 1 + R(u)
        return r[:, None] * np.stack([np.cos(u), np.sin(u)], -1)

    xi = graph_from_curve(curve, 4)
    assert np.allclose(xi.coefficients, R.resized(4).coefficients, atol=1e-13)


def test_radial_callable_matches_graph_direction(wavy):
    geom, sol = wavy
    xi = AngularField.mode(2)

    def V(t):
        return xi(t)[:, None] * np.stack([np.cos(t), np.sin(t)], -1)

    assert hadamard_derivative(sol, None, 0.5, V) == pytest.approx(hadamard_derivative(sol, None, 0.5, xi), abs=1e-13)
