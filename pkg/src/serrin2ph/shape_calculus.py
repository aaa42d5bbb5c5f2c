"""Shape functional, overdetermined residual and first variations.

The functional is ``J = int sigma |grad u|^2 - int (c + f)^2`` with f a function
of the polar angle only, so the volume term reduces to a boundary quadrature of
``(c + f)^2 R^2 / 2``.  Its first variation along a boundary displacement V is
``int_dOmega g (V . n) ds`` with ``g = |grad u|^2 - (c + f)^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import GeometryError, StepTooLarge
from .spectral import fourier_nodes
from .spectral_geometry import AngularField, GeometrySpec, frame_from_radius
from .twophase_solver import (
    DEFAULT_RESOLUTION,
    Conductivity,
    PulledBackSolution,
    Resolution,
    solve_dirichlet,
    solve_state,
)

# a boundary displacement: either a radial-graph increment or a callable
# theta -> (len(theta), 2) Cartesian vectors attached to the point at angle theta
Direction = Union[AngularField, Callable[[np.ndarray], np.ndarray]]

DEFAULT_FD_STEPS = (1e-3, 5e-4, 2.5e-4)


@dataclass(frozen=True)
class ParamVector:
    """Continuation parameters (phi, f, s) plus the translation coordinate eta."""

    phi: AngularField = field(default_factory=lambda: AngularField.zeros(0))
    f: AngularField = field(default_factory=lambda: AngularField.zeros(0))
    s: float = 0.0
    eta: tuple[float, float] = (0.0, 0.0)

    def eta_field(self) -> AngularField:
        return AngularField(np.array([0.0, self.eta[0], self.eta[1]]))

    def scaled(self, t: float) -> "ParamVector":
        return ParamVector(self.phi * t, self.f * t, self.s * t, (self.eta[0] * t, self.eta[1] * t))

    def geometry(self, base: GeometrySpec, xi: AngularField) -> GeometrySpec:
        outer = xi + self.eta_field() if any(self.eta) else xi
        return GeometrySpec(outer, base.inclusion_graph + self.phi, base.rho, base.margin)

    def conductivity(self, base: Conductivity) -> Conductivity:
        return base.shifted(self.s)

    @property
    def is_zero(self) -> bool:
        return (
            not np.any(self.phi.coefficients)
            and not np.any(self.f.coefficients)
            and self.s == 0.0
            and not any(self.eta)
        )


def _f_nodes(f: AngularField | float | None, M: int) -> np.ndarray:
    if f is None:
        return np.zeros(M)
    if isinstance(f, AngularField):
        return f.values(M)
    return np.full(M, float(f))


def _volume_term(geom: GeometrySpec, f, c: float) -> float:
    K = max(geom.outer_graph.K, f.K if isinstance(f, AngularField) else 0)
    L = max(64, 8 * K + 8)
    R = geom.outer_values(L)
    return float(0.5 * np.sum((c + _f_nodes(f, L)) ** 2 * R**2) * 2 * np.pi / L)


def dirichlet_energy(sol: PulledBackSolution) -> float:
    """int sigma |grad u|^2 over both phases."""
    g = sol.gradients
    ur, ut = g["inner"]
    vr, vt = g["annulus"]
    return sol.system.integrate(sol.cond.inner * (ur**2 + ut**2), vr**2 + vt**2)


def energy_pairing(a: PulledBackSolution, b: PulledBackSolution) -> float:
    """int sigma grad a . grad b; both fields must live on the same system."""
    if a.system is not b.system:
        raise ValueError("fields live on different discretisations")
    ga, gb = a.gradients, b.gradients
    inner = a.cond.inner * (ga["inner"][0] * gb["inner"][0] + ga["inner"][1] * gb["inner"][1])
    outer = ga["annulus"][0] * gb["annulus"][0] + ga["annulus"][1] * gb["annulus"][1]
    return a.system.integrate(inner, outer)


def functional_J(
    geom: GeometrySpec,
    cond: Conductivity,
    f: AngularField | float | None,
    c: float,
    resolution: Resolution = DEFAULT_RESOLUTION,
    sol: PulledBackSolution | None = None,
) -> float:
    if sol is None:
        sol = solve_state(geom, cond, resolution, check_resolution=False)
    return dirichlet_energy(sol) - _volume_term(geom, f, c)


def residual_nodes(sol: PulledBackSolution, f, c: float) -> np.ndarray:
    """g = |du/dn|^2 - (c + f)^2 at the outer boundary nodes."""
    return sol.dn_nodes**2 - (c + _f_nodes(f, sol.system.M)) ** 2


def residual_g(sol: PulledBackSolution, f, c: float) -> AngularField:
    return AngularField.from_values(residual_nodes(sol, f, c), sol.resolution.K)


def unsquared_residual(sol: PulledBackSolution, f, c: float) -> AngularField:
    """|grad u| - (c + f), reported alongside g for diagnostics."""
    return AngularField.from_values(np.abs(sol.dn_nodes) - (c + _f_nodes(f, sol.system.M)), sol.resolution.K)


def _normal_speed(sol: PulledBackSolution, direction: Direction) -> np.ndarray:
    """(V . n) * |gamma'| at the outer nodes, i.e. the density against d(theta)."""
    sys = sol.system
    M = sys.M
    R = sys.coords_out.F[0]
    if isinstance(direction, AngularField):
        # radial displacement delta*e_r: (e_r . n) |gamma'| = R
        return direction.values(M) * R
    frame = frame_from_radius(sol.geom.outer_radius(), M)
    V = np.asarray(direction(frame.theta), dtype=float)
    return np.einsum("ij,ij->i", V, frame.normal) * frame.speed


def normal_component(sol: PulledBackSolution, direction: Direction) -> np.ndarray:
    sys = sol.system
    speed = np.hypot(sys.coords_out.F[0], sys.coords_out.Ft[0])
    return _normal_speed(sol, direction) / speed


def hadamard_derivative(sol: PulledBackSolution, f, c: float, direction: Direction) -> float:
    """Boundary integral of g (V . n) ds."""
    g = residual_nodes(sol, f, c)
    return float(np.sum(g * _normal_speed(sol, direction)) * 2 * np.pi / sol.system.M)


def solve_shape_derivative(
    geom: GeometrySpec, cond: Conductivity, sol: PulledBackSolution, xi: Direction
) -> PulledBackSolution:
    """u'[xi]: sigma-harmonic with boundary values -du/dn (V . n)."""
    if sol.geom is not geom and sol.geom.geometry_id != geom.geometry_id:
        raise ValueError("state was computed on a different geometry")
    data = -sol.dn_nodes * normal_component(sol, xi)
    return solve_dirichlet(sol.system, data)


# ---------------------------------------------------------------------------
# finite differences


def graph_from_curve(curve: Callable[[np.ndarray], np.ndarray], K: int, M: int = 512, iters: int = 60) -> AngularField:
    """Radial graph R(theta) - 1 of a star-shaped closed curve given by a parametrisation.

    ``curve(t)`` returns points for parameters t in [0, 2 pi); the polar angle
    of the curve is inverted by Newton iteration on a Fourier interpolant.
    """
    t = fourier_nodes(M)
    p = np.asarray(curve(t), dtype=float)
    raw = np.arctan2(p[:, 1], p[:, 0])
    closed = np.unwrap(np.append(raw, raw[0]))
    if abs(closed[-1] - closed[0] - 2 * np.pi) > 1e-6:
        raise GeometryError("curve does not wind once around the origin")
    alpha = closed[:-1]
    Kint = M // 2 - 1
    shift = AngularField.from_values(alpha - t, Kint)
    dshift = shift.derivative()
    rad = AngularField.from_values(np.hypot(p[:, 0], p[:, 1]), Kint)
    if np.min(1.0 + dshift.values(M)) <= 0:
        raise GeometryError("polar angle is not monotone along the curve")
    target = fourier_nodes(M)
    tau = target - shift(target)
    for _ in range(iters):
        step = (tau + shift(tau) - target) / (1.0 + dshift(tau))
        tau = tau - step
        if np.max(np.abs(step)) < 1e-15:
            break
    return AngularField.from_values(rad(tau) - 1.0, K)


def displaced_geometry(geom: GeometrySpec, direction: Direction, h: float, K: int | None = None) -> GeometrySpec:
    K = geom.outer_graph.K if K is None else K
    if isinstance(direction, AngularField):
        xi = geom.outer_graph + direction * h
    else:
        radius = geom.outer_radius()

        def curve(t):
            base = radius(t)[:, None] * np.stack([np.cos(t), np.sin(t)], axis=-1)
            return base + h * np.asarray(direction(t))

        xi = graph_from_curve(curve, K)
    return GeometrySpec(xi, geom.inclusion_graph, geom.rho, geom.margin)


@dataclass(frozen=True)
class FDResult:
    value: float
    error_estimate: float
    raw: tuple[float, ...]

    def __float__(self):
        return self.value


def richardson(steps: Sequence[float], values: Sequence[float]) -> tuple[float, float]:
    """Extrapolate central differences D(h) = D0 + a h^2 + b h^4 + ... to h = 0."""
    h2 = np.asarray(steps, dtype=float) ** 2
    v = np.asarray(values, dtype=float)
    n = len(v)
    V = np.vander(h2, n, increasing=True)
    full = np.linalg.solve(V, v)[0]
    if n == 1:
        return float(full), float("nan")
    V2 = np.vander(h2[1:], n - 1, increasing=True)
    partial = np.linalg.solve(V2, v[1:])[0]
    return float(full), float(abs(full - partial))


def fd_shape_derivative(
    geom: GeometrySpec,
    cond: Conductivity,
    f,
    c: float,
    direction: Direction,
    h_steps: Sequence[float] = DEFAULT_FD_STEPS,
    resolution: Resolution = DEFAULT_RESOLUTION,
) -> FDResult:
    """Central differences of J along ``direction`` with Richardson extrapolation."""
    K = max(geom.outer_graph.K, resolution.K) if not isinstance(direction, AngularField) else None
    diffs = []
    for h in h_steps:
        vals = []
        for sgn in (1.0, -1.0):
            try:
                g = displaced_geometry(geom, direction, sgn * h, K)
            except GeometryError as exc:
                raise StepTooLarge(f"geometry invalid at step {sgn * h:g}: {exc}") from exc
            vals.append(functional_J(g, cond, f, c, resolution))
        diffs.append((vals[0] - vals[1]) / (2 * h))
    value, err = richardson(h_steps, diffs)
    return FDResult(value, err, tuple(diffs))
