import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SMALL
from serrin2ph.analytic_oracles import translated_circle_graph
from serrin2ph.branch_solver import (
    NewtonOptions,
    TrustRegion,
    branch_csv,
    fit_circle,
    prepare_base,
    solve_branch,
    solve_branch_projected,
    trace_branch,
)
from serrin2ph.errors import DegenerateBase, NoConvergence, NotCritical, OutsideTrustRegion
from serrin2ph.linearized_operator import residual_jacobian
from serrin2ph.shape_calculus import ParamVector, residual_g
from serrin2ph.spectral_geometry import AngularField, GeometrySpec
from serrin2ph.twophase_solver import Conductivity, Resolution, solve_state

PHI = ParamVector(phi=AngularField.mode(2, amplitude=0.05))
F3 = ParamVector(f=AngularField.mode(3, amplitude=0.01))


@pytest.fixture(scope="module")
def base():
    return prepare_base(GeometrySpec.concentric(0.5, SMALL.K), Conductivity(2.0), SMALL)


@pytest.fixture(scope="module")
def disk_base():
    return prepare_base(GeometrySpec.concentric(0.5, SMALL.K), Conductivity(1.0), SMALL)


def test_base_is_nondegenerate(base, disk_base):
    assert base.report.is_nondegenerate and not base.is_one_phase_disk
    assert not disk_base.report.is_nondegenerate and disk_base.is_one_phase_disk


def test_prepare_base_rejects_non_solution():
    geom = GeometrySpec.from_perturbations(0.5, AngularField.mode(2, amplitude=0.05))
    with pytest.raises(NotCritical):
        prepare_base(geom, Conductivity(2.0), SMALL)


def test_zero_parameter_is_immediate(base):
    xi, rep = solve_branch(base, ParamVector())
    assert rep.iterations == 0 and rep.converged
    assert not np.any(xi.coefficients)


def test_inclusion_perturbation(base):
    xi, rep = solve_branch(base, PHI)
    assert rep.converged and rep.residual_norm < 1e-10 and rep.iterations <= 12
    # a cos(2 theta) inclusion only excites even cosine modes
    assert np.max(np.abs(xi.b)) < 1e-12 and np.max(np.abs(xi.a[1::2])) < 1e-12
    assert xi.cos_coeff(2) > 0
    sol = solve_state(PHI.geometry(base.geom, xi), PHI.conductivity(base.cond), SMALL)
    assert residual_g(sol, PHI.f, base.c.c).sup_norm() < 1e-10


def test_boundary_data_perturbation_matches_linearization(base):
    # to first order Q xi = 2 c f
    xi, rep = solve_branch(base, F3)
    assert rep.residual_norm < 1e-10
    lin = np.linalg.solve(base.Q.matrix, 2 * base.c.c * F3.f.resized(SMALL.K).coefficients)
    assert np.max(np.abs(xi.coefficients - lin)) < 5e-4


def test_conductivity_shift_keeps_the_disk(base):
    xi, rep = solve_branch(base, ParamVector(s=0.5))
    assert rep.residual_norm < 1e-10 and xi.sup_norm() < 1e-12


def test_pure_chord_also_converges(base):
    xi_ref, _ = solve_branch(base, PHI)
    xi, rep = solve_branch(base, PHI, NewtonOptions(refresh_every=0))
    assert rep.jacobian_refreshes == 0
    assert np.max(np.abs(xi.coefficients - xi_ref.coefficients)) < 1e-9


def test_failure_report_is_attached(base):
    with pytest.raises(NoConvergence) as exc:
        solve_branch(base, PHI, NewtonOptions(max_iter=1))
    rep = exc.value.args[1]
    assert not rep.converged and rep.iterations == 1


def test_degenerate_base_refused(disk_base):
    with pytest.raises(DegenerateBase):
        solve_branch(disk_base, F3)


def test_trust_region():
    with pytest.raises(OutsideTrustRegion):
        TrustRegion().check(ParamVector(phi=AngularField.mode(2, amplitude=0.2)))
    with pytest.raises(OutsideTrustRegion):
        TrustRegion().check(ParamVector(eta=(0.2, 0.0)))
    TrustRegion().check(PHI)


def test_eta_rejected_in_nondegenerate_mode(base):
    with pytest.raises(ValueError):
        solve_branch(base, ParamVector(eta=(0.05, 0.0)))


def test_projected_mode_requires_disk(base):
    with pytest.raises(ValueError):
        solve_branch_projected(base, ParamVector(eta=(0.05, 0.0)))


def test_projected_zero(disk_base):
    xi, rep = solve_branch_projected(disk_base, ParamVector())
    assert rep.iterations == 0 and not np.any(xi.coefficients)


def test_projected_translation_gives_translated_circle(disk_base):
    lam = ParamVector(eta=(0.1, 0.0))
    xi, rep = solve_branch_projected(disk_base, lam)
    assert rep.residual_norm < 1e-10 and rep.y1_residual < 1e-10
    assert xi.cos_coeff(1) == 0 and xi.sin_coeff(1) == 0
    total = xi + lam.eta_field()
    fit = fit_circle(total)
    assert fit.residual < 1e-8
    assert np.hypot(fit.center[0] - 0.1, fit.center[1]) < 1e-8
    exact = AngularField.from_function(translated_circle_graph(0.1, 0.0), SMALL.K, 256) - 1.0
    assert np.max(np.abs(total.coefficients - exact.coefficients)) < 1e-9


def test_projected_boundary_data(disk_base):
    xi, rep = solve_branch_projected(disk_base, ParamVector(f=AngularField.mode(2, amplitude=0.01)))
    assert rep.residual_norm < 1e-10
    assert xi.cos_coeff(2) == pytest.approx(-0.02, abs=1e-3)


def test_trace_branch_conductivity_ramp(base):
    trace = trace_branch(base, ParamVector(s=1.0), steps=4)
    assert trace.completed and len(trace) == 4
    assert [smp.t for smp in trace] == [0.25, 0.5, 0.75, 1.0]
    assert all(smp.xi.sup_norm() < 1e-12 and smp.gamma_smallest_sv > 0 for smp in trace)


def test_trace_branch_inclusion_path_is_continuous(base):
    trace = trace_branch(base, PHI, steps=4)
    assert trace.completed
    norms = [smp.xi.sup_norm() for smp in trace]
    assert np.all(np.diff(norms) > 0)
    ratios = np.array(norms) / np.array([smp.t for smp in trace])
    assert ratios.max() / ratios.min() < 1.1


def test_trace_stops_on_degeneracy(disk_base):
    trace = trace_branch(disk_base, F3, steps=3)
    assert not trace.completed and len(trace) == 0
    assert trace.error.startswith("DegenerateBase")


def test_trace_projected(disk_base):
    trace = trace_branch(disk_base, ParamVector(eta=(0.1, 0.0)), steps=2, projected=True)
    assert trace.completed and trace.mode == "branch-projected"
    assert trace[-1].residual_norm < 1e-10


def test_branch_csv(base):
    trace = trace_branch(base, ParamVector(s=0.5), steps=2)
    lines = branch_csv(trace, SMALL.K, "h").splitlines()
    assert lines[0] == "# branch mode=branch K=16 config_hash=h"
    header = lines[1].split(",")
    assert header[:6] == ["t", "s", "phi_sup", "f_sup", "eta_a1", "eta_b1"]
    assert header[-4:] == ["residual_norm", "gamma_smallest_sv", "c", "converged"]
    assert len(header) == 6 + 33 + 4 and len(lines) == 4
    assert float(lines[3].split(",")[1]) == 0.5


def test_residual_jacobian_matches_finite_differences():
    # off the circle; the gap to FD shrinks spectrally with K
    res = Resolution(12, 0, 16, 20)
    geom = GeometrySpec.from_perturbations(
        0.5, AngularField(np.array([0.0, 0.01, 0.0, 0.03, -0.01])), AngularField.mode(2, amplitude=0.04, K=4)
    )
    cond = Conductivity(2.0)
    J = residual_jacobian(solve_state(geom, cond, res))
    xi = geom.outer_graph.resized(12)
    h = 1e-5

    def g(e):
        sol = solve_state(geom.with_outer(xi + AngularField(e)), cond, res, check_resolution=False)
        return residual_g(sol, None, 0.5).coefficients

    for j in range(25):
        e = np.zeros(25)
        e[j] = h
        assert np.max(np.abs((g(e) - g(-e)) / (2 * h) - J[:, j])) < 1e-6


@settings(max_examples=8)
@given(st.floats(-0.1, 0.1), st.floats(-0.1, 0.1), st.floats(0.9, 1.1))
def test_fit_circle_recovers_translated_circles(a, b, scale):
    xi = AngularField.from_function(translated_circle_graph(a, b), 24, 256) * scale - 1.0
    fit = fit_circle(xi)
    assert fit.residual < 1e-10
    assert fit.center == pytest.approx((a * scale, b * scale), abs=1e-10)
    assert fit.radius == pytest.approx(scale, abs=1e-10)


def test_fit_circle_sees_non_circles():
    assert fit_circle(AngularField.mode(2, amplitude=0.01)).residual > 1e-3
