"""Two-phase torsion problem -div(sigma grad u) = 1, u = 0 on the outer boundary.

Discretisation: Fourier in theta times Chebyshev in the reference radial
coordinate of each layer (see :class:`~serrin2ph.spectral_geometry.ReferenceMap`).
The inner layer is collocated along full diameters with an even number of
Chebyshev nodes, so the origin is never a node and values at s < 0 are folded
onto (|s|, theta + pi).  The two layers are glued by continuity of u and of
sigma * du/dn on the interface.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .errors import EllipticityLoss, NotCritical, ResolutionTooLow
from .spectral import cheb_diff, clenshaw_curtis_weights, fourier_diff, interval_weights
from .spectral_geometry import AngularField, GeometrySpec, LayerCoords, ReferenceMap

CRITICALITY_TOL = 1e-6
SPECTRAL_TAIL_TOL = 1e-8


@dataclass(frozen=True)
class Conductivity:
    sigma_c: float = 1.0
    s: float = 0.0

    def __post_init__(self):
        if self.sigma_c + self.s <= 0:
            raise EllipticityLoss(f"inclusion conductivity sigma_c + s = {self.sigma_c + self.s} <= 0")

    @property
    def inner(self) -> float:
        return self.sigma_c + self.s

    def shifted(self, s: float) -> "Conductivity":
        return Conductivity(self.sigma_c, self.s + s)


@dataclass(frozen=True)
class Resolution:
    K: int = 32
    M: int = 0
    n_inner: int = 20
    n_outer: int = 24

    def __post_init__(self):
        if self.M == 0:
            M = 3 * self.K
            object.__setattr__(self, "M", M + (M % 2))
        if self.M % 2 or self.M < 2 * self.K + 1:
            raise ValueError(f"M={self.M} must be even and at least 2K+1")
        if self.n_inner % 2:
            raise ValueError("n_inner must be even (no collocation node at the centre)")


DEFAULT_RESOLUTION = Resolution()


def _kron_rows(A_rows, B):
    return np.kron(A_rows, B)


class StateSystem:
    """Assembled and factorised collocation system for one (geometry, conductivity)."""

    def __init__(self, geom: GeometrySpec, cond: Conductivity, res: Resolution = DEFAULT_RESOLUTION):
        self.geom = geom
        self.cond = cond
        self.res = res
        self.map = ReferenceMap(geom)
        M = res.M
        self.M = M
        self.Dt, self.Dtt = fourier_diff(M)

        ni, no = res.n_inner, res.n_outer
        self.h = ni // 2
        self.s_in, self.Din = cheb_diff(ni)
        x_out, Dx = cheb_diff(no)
        self.s_out = 0.5 * (1.0 + x_out)
        self.Dout = 2.0 * Dx
        self.coords_in = self.map.layer_coords("inner", self.s_in, M)
        self.coords_out = self.map.layer_coords("annulus", self.s_out, M)

        self.n_in_unknowns = self.h * M
        self.n_unknowns = (self.h + no) * M

        # source column in the full inner grid for every folded unknown
        j = np.arange(M)
        i = np.arange(self.h)
        self._neg_cols = ((ni - 1 - i)[:, None] * M + (j[None, :] + M // 2) % M).ravel()
        self._unfold = np.concatenate([np.arange(self.h * M), self._neg_cols_inverse()])

        # PDE rows are multiplied by r^2 (polar form r^2 Lap u) to tame the 1/r^2 terms
        self._row_scale = np.ones(self.n_unknowns)
        hM = self.h * M
        self._row_scale[:hM] = self.coords_in.F[: self.h].ravel() ** 2
        self._row_scale[hM:] = self.coords_out.F.ravel() ** 2
        self.matrix = self._assemble()
        self.lu = sla.lu_factor(self.matrix, check_finite=False)

        self.w_out = 0.5 * clenshaw_curtis_weights(no)
        self.w_in = interval_weights(ni, 0.0, 1.0)

    # -- folding helpers -------------------------------------------------
    def _neg_cols_inverse(self):
        """Half-grid index feeding each negative-s node of the full inner grid."""
        M, ni, h = self.M, self.res.n_inner, self.h
        idx = np.empty((ni - h, M), dtype=int)
        for i_full in range(h, ni):
            i_half = ni - 1 - i_full
            idx[i_full - h] = i_half * M + (np.arange(M) + M // 2) % M
        return idx.ravel()

    def unfold_inner(self, half: np.ndarray) -> np.ndarray:
        """Inner values on the half grid -> values on the full diameter grid."""
        return half.ravel()[self._unfold].reshape(self.res.n_inner, self.M)

    def _fold_columns(self, A_full):
        hM = self.h * self.M
        return A_full[:, :hM] + A_full[:, self._neg_cols]

    # -- operators ---------------------------------------------------------
    def _layer_operator(self, coords: LayerCoords, D, rows):
        M = self.M
        I_s = np.eye(D.shape[0])
        I_t = np.eye(M)
        css, cst, ctt, cs = (c[rows].ravel()[:, None] for c in coords.laplacian_coefficients())
        D2 = D @ D
        return (
            css * _kron_rows(D2[rows], I_t)
            + cst * _kron_rows(D[rows], self.Dt)
            + ctt * _kron_rows(I_s[rows], self.Dtt)
            + cs * _kron_rows(D[rows], I_t)
        )

    def _normal_operator(self, coords: LayerCoords, D, row):
        """Rows evaluating du/dn (unit normal of the curve s = s[row]) at that s."""
        F, Ft = coords.F[row], coords.Ft[row]
        Sr, St, *_ = (q[row] for q in coords.inverse_derivatives())
        speed = np.hypot(F, Ft)
        nr, nt = F / speed, -Ft / speed
        alpha = nr * Sr + nt * St / F
        beta = nt / F
        I_s = np.eye(D.shape[0])
        return alpha[:, None] * np.kron(D[row : row + 1], np.eye(self.M)) + beta[:, None] * np.kron(
            I_s[row : row + 1], self.Dt
        )

    def _assemble(self):
        M, h, no = self.M, self.h, self.res.n_outer
        hM = h * M
        N = self.n_unknowns
        A = np.zeros((N, N))
        sig_in, sig_out = self.cond.inner, 1.0

        # inner layer: row block i = 0 is the interface (continuity), the rest PDE
        L_in = self._fold_columns(self._layer_operator(self.coords_in, self.Din, slice(1, h)))
        A[M:hM, :hM] = sig_in * self._row_scale[M:hM, None] * L_in
        iface_out = hM + (no - 1) * M
        A[np.arange(M), np.arange(M)] = 1.0
        A[np.arange(M), iface_out + np.arange(M)] = -1.0

        # annulus: s = 1 Dirichlet, interior PDE, s = 0 flux matching
        A[hM + np.arange(M), hM + np.arange(M)] = 1.0
        L_out = self._layer_operator(self.coords_out, self.Dout, slice(1, no - 1))
        A[hM + M : iface_out, hM:] = sig_out * self._row_scale[hM + M : iface_out, None] * L_out
        N_in = self._fold_columns(self._normal_operator(self.coords_in, self.Din, 0))
        N_out = self._normal_operator(self.coords_out, self.Dout, no - 1)
        A[iface_out:, :hM] = sig_in * N_in
        A[iface_out:, hM:] = -sig_out * N_out
        return A

    # -- right-hand sides ----------------------------------------------------
    def _pde_rows(self):
        M, h, no = self.M, self.h, self.res.n_outer
        hM = h * M
        return np.r_[M:hM, hM + M : hM + (no - 1) * M]

    def state_rhs(self) -> np.ndarray:
        b = np.zeros(self.n_unknowns)
        rows = self._pde_rows()
        b[rows] = -self._row_scale[rows]
        return b

    def source_rhs(self, q) -> np.ndarray:
        """Right-hand side for -div(sigma grad w) = q(x, y), w = 0 on the outer boundary."""
        b = np.zeros(self.n_unknowns)
        rows = self._pde_rows()
        xs, ys = [], []
        for coords, sl in ((self.coords_in, slice(0, self.h)), (self.coords_out, slice(None))):
            F = coords.F[sl]
            t = np.broadcast_to(2 * np.pi * np.arange(self.M) / self.M, F.shape)
            xs.append((F * np.cos(t)).ravel())
            ys.append((F * np.sin(t)).ravel())
        qv = np.asarray(q(np.concatenate(xs), np.concatenate(ys)), dtype=float)
        b[rows] = -self._row_scale[rows] * qv[rows]
        return b

    def dirichlet_rhs(self, data: np.ndarray) -> np.ndarray:
        """Homogeneous transmission problem with outer Dirichlet data (columns allowed)."""
        data = np.asarray(data, dtype=float)
        b = np.zeros((self.n_unknowns,) + data.shape[1:])
        hM = self.h * self.M
        b[hM : hM + self.M] = data
        return b

    def solve(self, rhs: np.ndarray, refine: int = 2) -> np.ndarray:
        """LU solve plus ``refine`` steps of iterative refinement.

        Refinement brings the boundary derivative traces down from ~1e-10 to
        ~1e-13, which keeps the Newton residual floor well below 1e-10.
        """
        x = sla.lu_solve(self.lu, rhs, check_finite=False)
        for _ in range(refine):
            x = x + sla.lu_solve(self.lu, rhs - self.matrix @ x, check_finite=False)
        return x

    def split(self, x: np.ndarray):
        hM = self.h * self.M
        return x[:hM].reshape(self.h, self.M), x[hM:].reshape(self.res.n_outer, self.M)

    # -- post-processing -------------------------------------------------------
    def polar_derivatives(self, w, coords: LayerCoords, D, rows=slice(None)):
        """u_r, u_theta (and second derivatives) from reference-grid values w."""
        Dt, Dtt = self.Dt, self.Dtt
        ws = (D @ w)[rows]
        wss = (D @ (D @ w))[rows]
        wt = (w @ Dt.T)[rows]
        wst = (D @ w @ Dt.T)[rows]
        wtt = (w @ Dtt.T)[rows]
        Sr, St, Srr, Stt, Srt = (q[rows] for q in coords.inverse_derivatives())
        ur = ws * Sr
        ut = ws * St + wt
        urr = wss * Sr**2 + ws * Srr
        utt = wss * St**2 + 2 * wst * St + wtt + ws * Stt
        urt = wss * Sr * St + wst * Sr + ws * Srt
        return ur, ut, urr, utt, urt

    def gradients(self, inner_half, annulus):
        """Cartesian-frame gradient components (u_r, u_theta/r) on both full grids."""
        w_in = self.unfold_inner(inner_half)
        out = {}
        for name, w, coords, D in (
            ("inner", w_in, self.coords_in, self.Din),
            ("annulus", annulus, self.coords_out, self.Dout),
        ):
            Sr, St, *_ = coords.inverse_derivatives()
            ws = D @ w
            wt = w @ self.Dt.T
            out[name] = (ws * Sr, (ws * St + wt) / coords.F)
        return out

    def integrate(self, inner_full, annulus) -> float:
        """Area integral of a field given on the full inner grid and the annulus grid."""
        dt = 2 * np.pi / self.M
        jin = self.coords_in.jacobian_det
        jout = self.coords_out.jacobian_det
        return float(dt * (self.w_in @ (inner_full * jin)).sum() + dt * (self.w_out @ (annulus * jout)).sum())

    def outer_traces(self, annulus):
        """du/dn, d2u/dn2, and u_theta on the outer boundary from annulus values."""
        ur, ut, urr, utt, urt = self.polar_derivatives(annulus, self.coords_out, self.Dout, rows=slice(0, 1))
        ur, ut, urr, utt, urt = (q[0] for q in (ur, ut, urr, utt, urt))
        F = self.coords_out.F[0]
        Ft = self.coords_out.Ft[0]
        speed = np.hypot(F, Ft)
        nr, nt = F / speed, -Ft / speed
        Hrr = urr
        Hrt = urt / F - ut / F**2
        Htt = utt / F**2 + ur / F
        dn = nr * ur + nt * ut / F
        dnn = nr**2 * Hrr + 2 * nr * nt * Hrt + nt**2 * Htt
        return dn, dnn

    def interface_jump(self, inner_half, annulus):
        """Max mismatch of u and sigma*du/dn across the interface."""
        w_in = self.unfold_inner(inner_half)
        N_in = self._normal_operator(self.coords_in, self.Din, 0)
        N_out = self._normal_operator(self.coords_out, self.Dout, self.res.n_outer - 1)
        flux = self.cond.inner * (N_in @ w_in.ravel()) - N_out @ annulus.ravel()
        value = w_in[0] - annulus[-1]
        return float(np.max(np.abs(value))), float(np.max(np.abs(flux)))

    def pde_residual(self, x, rhs) -> float:
        r = self.matrix @ x - rhs
        rows = self._pde_rows()
        return float(np.max(np.abs(r[rows])) / max(1.0, np.max(np.abs(rhs))))


@dataclass(frozen=True, eq=False)
class PulledBackSolution:
    """Reference-grid field plus its outer-boundary traces."""

    inner_values: np.ndarray
    annulus_values: np.ndarray
    dn_u: AngularField
    dnn_u: AngularField
    c_base: float
    resolution: Resolution
    system: StateSystem = field(repr=False)
    dn_nodes: np.ndarray = field(repr=False)
    dnn_nodes: np.ndarray = field(repr=False)
    pde_residual: float = 0.0

    @property
    def geom(self) -> GeometrySpec:
        return self.system.geom

    @property
    def cond(self) -> Conductivity:
        return self.system.cond

    def inner_full(self) -> np.ndarray:
        return self.system.unfold_inner(self.inner_values)

    @cached_property
    def gradients(self):
        return self.system.gradients(self.inner_values, self.annulus_values)

    def flux_integral(self) -> float:
        """Outer-boundary integral of sigma * du/dn (sigma = 1 there)."""
        sys = self.system
        R = sys.coords_out.F[0]
        Rt = sys.coords_out.Ft[0]
        return float(np.sum(self.dn_nodes * np.hypot(R, Rt)) * 2 * np.pi / sys.M)

    def flux_defect(self) -> float:
        return abs(self.flux_integral() + self.geom.area())

    def value_at(self, x, y) -> np.ndarray:
        """Spectral interpolation of u at physical points (for tests and plots)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        sys = self.system
        out = np.empty(x.shape)
        s_in, t_in = sys.map.to_reference("inner", x, y)
        inside = s_in <= 1.0
        s_an, t_an = sys.map.to_reference("annulus", x, y)
        for mask, s, t, w, nodes in (
            (inside, s_in, t_in, self.inner_full(), sys.s_in),
            (~inside, 2 * s_an - 1, t_an, self.annulus_values, 2 * sys.s_out - 1),
        ):
            if not mask.any():
                continue
            for idx in np.flatnonzero(mask):
                radial = _cheb_interp_weights(nodes, s[idx])
                col = radial @ w
                out[idx] = AngularField.from_values(col, (sys.M - 1) // 2 if sys.M % 2 else sys.M // 2 - 1)(t[idx])
        return out


def _cheb_interp_weights(nodes, x):
    """Barycentric weights for the Lobatto interpolant evaluated at x."""
    n = nodes.size
    wb = (-1.0) ** np.arange(n)
    wb[0] *= 0.5
    wb[-1] *= 0.5
    d = x - nodes
    hit = np.isclose(d, 0.0, atol=1e-15)
    if hit.any():
        e = np.zeros(n)
        e[np.argmax(hit)] = 1.0
        return e
    q = wb / d
    return q / q.sum()


def _make_solution(system: StateSystem, x: np.ndarray, rhs: np.ndarray, c_from_dn: bool) -> PulledBackSolution:
    inner, annulus = system.split(x)
    dn, dnn = system.outer_traces(annulus)
    K = system.res.K
    c = float(np.mean(np.abs(dn))) if c_from_dn else float("nan")
    return PulledBackSolution(
        inner_values=inner,
        annulus_values=annulus,
        dn_u=AngularField.from_values(dn, K),
        dnn_u=AngularField.from_values(dnn, K),
        c_base=c,
        resolution=system.res,
        system=system,
        dn_nodes=dn,
        dnn_nodes=dnn,
        pde_residual=system.pde_residual(x, rhs),
    )


def spectral_tail_fraction(values: np.ndarray, K: int) -> float:
    """Energy fraction carried by modes k > 2K/3 of the K-mode projection of ``values``."""
    c = AngularField.from_values(values, K).coefficients
    energy = np.r_[2 * c[0] ** 2, c[1:] ** 2]
    total = energy.sum()
    if total == 0:
        return 0.0
    k = np.r_[0, np.repeat(np.arange(1, K + 1), 2)]
    return float(energy[3 * k > 2 * K].sum() / total)


def solve_state(
    geom: GeometrySpec,
    cond: Conductivity,
    resolution: Resolution = DEFAULT_RESOLUTION,
    check_resolution: bool = True,
) -> PulledBackSolution:
    system = StateSystem(geom, cond, resolution)
    rhs = system.state_rhs()
    x = system.solve(rhs)
    sol = _make_solution(system, x, rhs, c_from_dn=True)
    if check_resolution:
        tail = spectral_tail_fraction(sol.dn_nodes, resolution.K)
        if tail > SPECTRAL_TAIL_TOL:
            raise ResolutionTooLow(f"trailing third of the dn_u spectrum carries {tail:.2e} of its energy")
    return sol


def solve_dirichlet(system: StateSystem, data: np.ndarray) -> PulledBackSolution:
    """sigma-harmonic field with outer boundary values ``data`` (nodal)."""
    rhs = system.dirichlet_rhs(data)
    x = system.solve(rhs)
    return _make_solution(system, x, rhs, c_from_dn=False)


@dataclass(frozen=True)
class CriticalConstant:
    c: float
    defect: float

    def __float__(self):
        return self.c


def compute_c(sol: PulledBackSolution, tol: float = CRITICALITY_TOL) -> CriticalConstant:
    """Mean |du/dn| on the outer boundary; raises NotCritical if it is not constant."""
    g = np.abs(sol.dn_nodes)
    c = float(g.mean())
    defect = float(np.max(np.abs(g - c)))
    if defect / c > tol:
        raise NotCritical(f"|du/dn| varies by {defect:.3e} around mean {c:.6f}")
    return CriticalConstant(c, defect)
