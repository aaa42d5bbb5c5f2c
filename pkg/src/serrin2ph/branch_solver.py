"""Newton continuation of solutions of h(xi, lambda) = 0.

Nondegenerate mode solves ``residual_g(xi, lambda) = 0`` for the outer graph
correction xi; projected mode (one-phase disk only) solves the barycenter
projection of the residual over xi orthogonal to cos/sin(theta), with the
translation part eta prescribed.  Both use a chord iteration with the base
Jacobian Q, refreshed at the current geometry every few steps.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
import scipy.linalg as sla
from scipy.optimize import least_squares

from .errors import DegenerateBase, GeometryError, NoConvergence, OutsideTrustRegion
from .linearized_operator import (
    DEFAULT_REL_TOL,
    LinearOperatorMatrix,
    NondegeneracyReport,
    assemble_Q,
    assemble_gamma,
    barycenter_indices,
    nondegeneracy_report,
    residual_jacobian,
    restrict_bar,
)
from .shape_calculus import ParamVector, residual_g
from .spectral_geometry import AngularField, GeometrySpec, basis_labels
from .twophase_solver import (
    DEFAULT_RESOLUTION,
    Conductivity,
    CriticalConstant,
    PulledBackSolution,
    Resolution,
    compute_c,
    solve_state,
)


@dataclass(frozen=True)
class TrustRegion:
    phi: float = 0.1
    f: float = 0.1
    s: float = 1.0
    eta: float = 0.15

    def check(self, lam: ParamVector) -> None:
        checks = (
            ("phi", lam.phi.sup_norm(), self.phi),
            ("f", lam.f.sup_norm(), self.f),
            ("s", abs(lam.s), self.s),
            ("eta", float(np.hypot(*lam.eta)), self.eta),
        )
        for name, value, bound in checks:
            if value > bound:
                raise OutsideTrustRegion(f"|{name}| = {value:.4g} exceeds trust region bound {bound:g}")


@dataclass(frozen=True)
class NewtonOptions:
    tol: float = 1e-10
    max_iter: int = 30
    refresh_every: int = 3  # 0 keeps the base Jacobian throughout
    rel_tol: float = DEFAULT_REL_TOL
    trust: TrustRegion = field(default_factory=TrustRegion)


@dataclass(frozen=True)
class NewtonReport:
    iterates: list  # (iteration, residual sup-norm, step sup-norm)
    converged: bool
    final_xi: AngularField
    jacobian_refreshes: int
    y1_residual: float = 0.0  # cos/sin(theta) part of the full residual (projected mode)

    @property
    def iterations(self) -> int:
        return max(0, len(self.iterates) - 1)

    @property
    def residual_norm(self) -> float:
        return self.iterates[-1][1] if self.iterates else float("nan")


@dataclass(frozen=True, eq=False)
class BaseState:
    """A critical base configuration with its operators, ready for continuation."""

    geom: GeometrySpec
    cond: Conductivity
    resolution: Resolution
    sol: PulledBackSolution
    c: CriticalConstant
    gamma: LinearOperatorMatrix
    Q: LinearOperatorMatrix
    report: NondegeneracyReport

    @property
    def is_one_phase_disk(self) -> bool:
        return self.cond.inner == 1.0 and not np.any(self.geom.outer_graph.coefficients)


def prepare_base(
    geom: GeometrySpec,
    cond: Conductivity,
    resolution: Resolution = DEFAULT_RESOLUTION,
    rel_tol: float = DEFAULT_REL_TOL,
) -> BaseState:
    """Solve, measure c (NotCritical if the base is not a solution), assemble Gamma and Q."""
    sol = solve_state(geom, cond, resolution)
    c = compute_c(sol)
    gamma = assemble_gamma(geom, cond, sol)
    Q = assemble_Q(gamma, c)
    return BaseState(geom, cond, resolution, sol, c, gamma, Q, nondegeneracy_report(Q, rel_tol))


# ---------------------------------------------------------------------------


def _evaluate(base: BaseState, lam: ParamVector, xi: AngularField):
    geom = lam.geometry(base.geom, xi)
    sol = solve_state(geom, lam.conductivity(base.cond), base.resolution, check_resolution=False)
    return sol, residual_g(sol, lam.f, base.c.c)


def _newton(base, lam, xi0, opts, idx, J0):
    """Chord iteration over the coefficient positions ``idx``."""
    K = base.resolution.K
    xi = AngularField.zeros(K) if xi0 is None else xi0.resized(K)
    lu = sla.lu_factor(J0[np.ix_(idx, idx)])
    refreshes = 0
    iterates = []
    step_norm = 0.0
    for it in range(opts.max_iter + 1):
        sol, g = _evaluate(base, lam, xi)
        r = g.coefficients[idx]
        rnorm = AngularField(_embed(r, idx, K)).sup_norm()
        iterates.append((it, rnorm, step_norm))
        if not np.isfinite(rnorm):
            break
        if rnorm <= opts.tol:
            return xi, NewtonReport(iterates, True, xi, refreshes, _y1_part(g)), g
        if it == opts.max_iter:
            break
        if opts.refresh_every and it > 0 and it % opts.refresh_every == 0:
            lu = sla.lu_factor(residual_jacobian(sol)[np.ix_(idx, idx)])
            refreshes += 1
        delta = sla.lu_solve(lu, -r)
        step = AngularField(_embed(delta, idx, K))
        step_norm = step.sup_norm()
        xi = xi + step
    report = NewtonReport(iterates, False, xi, refreshes)
    raise NoConvergence(
        f"no convergence after {len(iterates) - 1} iterations (residual {iterates[-1][1]:.3e})", report
    )


def _embed(values, idx, K):
    c = np.zeros(2 * K + 1)
    c[idx] = values
    return c


def _y1_part(g: AngularField) -> float:
    return float(np.hypot(*g.coefficients[1:3])) if g.K >= 1 else 0.0


def solve_branch(
    base: BaseState, lam: ParamVector, opts: NewtonOptions = NewtonOptions(), xi0: AngularField | None = None
) -> tuple[AngularField, NewtonReport]:
    """Solve residual_g(xi, lambda) = 0 near the nondegenerate base."""
    if any(lam.eta):
        raise ValueError("eta is only used in projected mode")
    opts.trust.check(lam)
    if base.report.smallest_sv <= opts.rel_tol * base.report.largest_sv:
        raise DegenerateBase(
            f"base Q has a {len(base.report.kernel_basis)}-dimensional near-kernel "
            f"(smallest singular value {base.report.smallest_sv:.3e})"
        )
    idx = np.arange(2 * base.resolution.K + 1)
    xi, report, _ = _newton(base, lam, xi0, opts, idx, base.Q.matrix)
    return xi, report


def solve_branch_projected(
    base: BaseState, lam: ParamVector, opts: NewtonOptions = NewtonOptions(), xi0: AngularField | None = None
) -> tuple[AngularField, NewtonReport]:
    """Solve pi_bar residual(1 + xi + eta) = 0 with xi orthogonal to cos/sin(theta)."""
    if not base.is_one_phase_disk:
        raise ValueError("projected mode is only available at the one-phase disk base")
    opts.trust.check(lam)
    idx = barycenter_indices(base.resolution.K)
    if xi0 is not None:
        c = xi0.resized(base.resolution.K).coefficients.copy()
        c[1:3] = 0.0
        xi0 = AngularField(c)
    xi, report, _ = _newton(base, lam, xi0, opts, idx, base.Q.matrix)
    return xi, report


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BranchSample:
    t: float
    lam: ParamVector
    xi: AngularField
    residual_norm: float
    gamma_smallest_sv: float
    c: float
    converged: bool = True
    iterations: int = 0
    error: str = ""


@dataclass(frozen=True)
class BranchTrace:
    samples: list
    mode: str
    error: str = ""

    @property
    def completed(self) -> bool:
        return not self.error

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]


Path = Union[ParamVector, Callable[[float], ParamVector]]


def _smallest_gamma_sv(base, lam, xi, projected):
    geom = lam.geometry(base.geom, xi)
    cond = lam.conductivity(base.cond)
    sol = solve_state(geom, cond, base.resolution, check_resolution=False)
    gamma = assemble_gamma(geom, cond, sol)
    if projected:
        gamma = restrict_bar(gamma)
    return gamma.singular_values[-1], gamma.singular_values[0]


def trace_branch(
    base: BaseState,
    path: Path,
    steps: int = 10,
    opts: NewtonOptions = NewtonOptions(),
    projected: bool = False,
) -> BranchTrace:
    """Warm-started continuation at t = 1/steps, ..., 1.

    Solver failures (degeneracy, no convergence) end the trace and are recorded
    on it; a geometry violation is raised with the partial trace attached as
    ``exc.partial``.
    """
    lam_of = path if callable(path) else path.scaled
    solve = solve_branch_projected if projected else solve_branch
    mode = "branch-projected" if projected else "branch"
    samples = []
    xi = None
    for i in range(1, steps + 1):
        t = i / steps
        lam = lam_of(t)
        try:
            xi, report = solve(base, lam, opts, xi0=xi)
            smin, smax = _smallest_gamma_sv(base, lam, xi, projected)
        except GeometryError as exc:
            exc.partial = BranchTrace(samples, mode, f"{type(exc).__name__}: {exc}")
            raise
        except NoConvergence as exc:
            rep = exc.args[1] if len(exc.args) > 1 else None
            if rep is not None:
                samples.append(
                    BranchSample(t, lam, rep.final_xi, rep.residual_norm, float("nan"), base.c.c, False,
                                 rep.iterations, "NoConvergence")
                )
            return BranchTrace(samples, mode, f"NoConvergence: {exc.args[0]}")
        except DegenerateBase as exc:
            return BranchTrace(samples, mode, f"DegenerateBase: {exc}")
        degenerate = smax == 0 or smin <= opts.rel_tol * smax
        samples.append(
            BranchSample(t, lam, xi, report.residual_norm, float(smin), base.c.c, True, report.iterations,
                         "DegenerateBase" if degenerate else "")
        )
        if degenerate:
            return BranchTrace(samples, mode, f"DegenerateBase: Gamma smallest singular value {smin:.3e} at t={t:g}")
    return BranchTrace(samples, mode)


def branch_csv(trace: BranchTrace | Sequence[BranchSample], K: int, config_hash: str = "") -> str:
    """One row per sample; header comment line plus named columns."""
    samples = list(trace)
    buf = io.StringIO()
    buf.write(f"# branch mode={getattr(trace, 'mode', '')} K={K} config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    xi_cols = [f"xi_{lab}" for lab in basis_labels(K)]
    w.writerow(
        ["t", "s", "phi_sup", "f_sup", "eta_a1", "eta_b1"]
        + xi_cols
        + ["residual_norm", "gamma_smallest_sv", "c", "converged"]
    )
    for smp in samples:
        lam = smp.lam
        w.writerow(
            [repr(float(smp.t)), repr(float(lam.s)), repr(lam.phi.sup_norm()), repr(lam.f.sup_norm()),
             repr(float(lam.eta[0])), repr(float(lam.eta[1]))]
            + [repr(float(v)) for v in smp.xi.resized(K).coefficients]
            + [repr(float(smp.residual_norm)), repr(float(smp.gamma_smallest_sv)), repr(float(smp.c)),
               int(smp.converged)]
        )
    return buf.getvalue()


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CircleFit:
    center: tuple[float, float]
    radius: float
    residual: float


def fit_circle(xi_total: AngularField, M: int = 512) -> CircleFit:
    """Least-squares circle through the polar graph 1 + xi_total.

    Algebraic (Kasa) fit as the starting point, refined on geometric distances.
    ``residual`` is the largest distance deviation from the fitted circle.
    """
    theta = 2 * np.pi * np.arange(M) / M
    R = 1.0 + xi_total.values(M)
    x, y = R * np.cos(theta), R * np.sin(theta)
    A = np.column_stack([2 * x, 2 * y, np.ones(M)])
    (a, b, e), *_ = np.linalg.lstsq(A, x**2 + y**2, rcond=None)
    r0 = np.sqrt(max(e + a * a + b * b, 0.0))

    def dev(p):
        return np.hypot(x - p[0], y - p[1]) - p[2]

    res = least_squares(dev, [a, b, r0], xtol=1e-15, ftol=1e-15, gtol=1e-15)
    cx, cy, r = res.x
    return CircleFit((float(cx), float(cy)), float(r), float(np.max(np.abs(dev(res.x)))))
