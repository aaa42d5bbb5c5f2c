"""Linearised boundary operators over the truncated Fourier basis.

``Gamma(xi) = d_n u'[xi] + d2_nn u * xi`` and ``Q = -2c Gamma`` at a critical
configuration.  Away from the unit circle the radial-graph increment
``delta * e_r`` has a tangential part as well, and :func:`assemble_gamma`
returns the matching generalisation

    Gamma(delta) = d_n u'[delta] + d2_nn u (V.n) + d_tau(d_n u) (V.tau),  V = delta e_r,

so that ``2 d_n u * Gamma`` is exactly the derivative of the pulled-back
residual in the graph coordinates (the Newton Jacobian).  On the unit circle
V.n = delta and V.tau = 0, which recovers the textbook operator.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import NotCritical
from .spectral_geometry import AngularField, basis_labels, evaluation_matrix, projection_matrix
from .twophase_solver import CRITICALITY_TOL, PulledBackSolution, compute_c

DEFAULT_REL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class LinearOperatorMatrix:
    matrix: np.ndarray
    kind: str
    geometry_id: str
    indices: np.ndarray | None = None
    singular_values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if not np.all(np.isfinite(m)):
            raise ValueError("operator has non-finite entries")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        sv = np.linalg.svd(m, compute_uv=False) if m.size else np.zeros(0)
        sv.setflags(write=False)
        object.__setattr__(self, "singular_values", sv)

    @property
    def K(self) -> int:
        if self.indices is not None:
            return int(np.max(self.indices) + 1) // 2
        return (self.matrix.shape[1] - 1) // 2

    @property
    def labels(self) -> list[str]:
        labels = basis_labels(self.K)
        return labels if self.indices is None else [labels[i] for i in self.indices]

    def __matmul__(self, xi: AngularField) -> AngularField:
        return AngularField(self.matrix @ xi.resized(self.K).coefficients)

    def diagonal_by_mode(self) -> np.ndarray:
        """Diagonal entries as a (K+1) x 2 table of (cos entry, sin entry); sin of mode 0 is nan."""
        if self.indices is not None:
            raise ValueError("mode table needs the full basis")
        d = np.diag(self.matrix)
        out = np.zeros((self.K + 1, 2))
        out[0, 0] = d[0]
        out[0, 1] = np.nan
        out[1:, 0] = d[1::2]
        out[1:, 1] = d[2::2]
        return out

    def off_diagonal_leakage(self) -> float:
        off = self.matrix - np.diag(np.diag(self.matrix))
        return float(np.max(np.abs(off))) if off.size else 0.0

    def to_csv(self, config_hash: str = "") -> str:
        buf = io.StringIO()
        buf.write(f"# kind={self.kind} geometry_id={self.geometry_id} K={self.K} config_hash={config_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        labels = self.labels
        w.writerow(["row"] + labels)
        for lab, row in zip(labels, self.matrix):
            w.writerow([lab] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def spectrum_csv(self, config_hash: str = "") -> str:
        buf = io.StringIO()
        buf.write(f"# kind={self.kind} geometry_id={self.geometry_id} K={self.K} config_hash={config_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "singular_value", "diag_mode", "diag_kind", "diag_value"])
        d = np.diag(self.matrix)
        labels = self.labels
        for i, sv in enumerate(self.singular_values):
            lab = labels[i]
            w.writerow([i, repr(float(sv)), lab[1:], "cos" if lab[0] == "a" else "sin", repr(float(d[i]))])
        return buf.getvalue()


def _outer_vectors(sol: PulledBackSolution):
    sys = sol.system
    R = sys.coords_out.F[0]
    Rt = sys.coords_out.Ft[0]
    speed = np.hypot(R, Rt)
    return R / speed, Rt / speed, speed


def gamma_nodal(sol: PulledBackSolution, columns: np.ndarray) -> np.ndarray:
    """Apply Gamma to radial increments given by nodal ``columns`` (M x m)."""
    sys = sol.system
    er_n, er_tau, speed = _outer_vectors(sol)
    data = -(sol.dn_nodes * er_n)[:, None] * columns
    x = sys.solve(sys.dirichlet_rhs(data))
    hM = sys.h * sys.M
    m = columns.shape[1]
    annulus = x[hM:].reshape(sys.res.n_outer, sys.M, m)
    dn_prime = np.empty((sys.M, m))
    for j in range(m):
        dn_prime[:, j], _ = sys.outer_traces(annulus[:, :, j])
    dtau_dn = (sys.Dt @ sol.dn_nodes) / speed
    return dn_prime + (sol.dnn_nodes * er_n + dtau_dn * er_tau)[:, None] * columns


def assemble_gamma(geom, cond, sol: PulledBackSolution) -> LinearOperatorMatrix:
    """Gamma as a (2K+1) x (2K+1) matrix; one factorisation shared by all columns."""
    if sol.geom.geometry_id != geom.geometry_id:
        raise ValueError("state was computed on a different geometry")
    K, M = sol.resolution.K, sol.system.M
    E = evaluation_matrix(K, M)
    P = projection_matrix(K, M)
    G = P @ gamma_nodal(sol, E)
    return LinearOperatorMatrix(G, "Gamma", _op_id(geom, cond))


def _op_id(geom, cond) -> str:
    return f"{geom.geometry_id}-{cond.sigma_c:g}-{cond.s:g}"


def residual_jacobian(sol: PulledBackSolution) -> np.ndarray:
    """Derivative of the projected residual g in the graph coefficients of xi."""
    K, M = sol.resolution.K, sol.system.M
    E = evaluation_matrix(K, M)
    P = projection_matrix(K, M)
    return P @ ((2.0 * sol.dn_nodes)[:, None] * gamma_nodal(sol, E))


def assemble_Q(gamma: LinearOperatorMatrix, c, sol: PulledBackSolution | None = None, tol: float = CRITICALITY_TOL):
    """Q = -2c Gamma; with ``sol`` the criticality of the base is verified first."""
    if sol is not None:
        compute_c(sol, tol)
    cval = float(c)
    if hasattr(c, "defect") and c.defect / cval > tol:
        raise NotCritical(f"criticality defect {c.defect:.3e} too large")
    return LinearOperatorMatrix(-2.0 * cval * gamma.matrix, "Q", gamma.geometry_id)


@dataclass(frozen=True)
class NondegeneracyReport:
    is_nondegenerate: bool
    kernel_basis: list
    smallest_sv: float
    largest_sv: float
    spectrum: np.ndarray

    @property
    def ratio(self) -> float:
        return self.smallest_sv / self.largest_sv if self.largest_sv > 0 else 0.0

    def as_dict(self) -> dict:
        return {
            "is_nondegenerate": bool(self.is_nondegenerate),
            "kernel_dimension": len(self.kernel_basis),
            "smallest_sv": self.smallest_sv,
            "largest_sv": self.largest_sv,
            "ratio": self.ratio,
        }


def nondegeneracy_report(op: LinearOperatorMatrix, rel_tol: float = DEFAULT_REL_TOL) -> NondegeneracyReport:
    m = np.asarray(op.matrix)
    _, sv, Vt = np.linalg.svd(m)
    smax = float(sv[0]) if sv.size else 0.0
    cutoff = rel_tol * smax
    null = sv <= cutoff if smax > 0 else np.ones_like(sv, dtype=bool)
    kernel = [AngularField(v) for v in Vt[null]]
    smin = float(sv[-1]) if sv.size else 0.0
    return NondegeneracyReport(
        is_nondegenerate=bool(smax > 0 and smin > cutoff),
        kernel_basis=kernel,
        smallest_sv=smin,
        largest_sv=smax,
        spectrum=sv,
    )


def shifted_operator(gamma: LinearOperatorMatrix, mu: float) -> LinearOperatorMatrix:
    """Gamma + mu I, invertible once mu exceeds sup |d2_nn u| on the boundary."""
    return LinearOperatorMatrix(gamma.matrix + mu * np.eye(gamma.matrix.shape[0]), "Gamma+mu", gamma.geometry_id)


def barycenter_indices(K: int) -> np.ndarray:
    """Coefficient positions orthogonal to span{cos, sin}."""
    keep = np.ones(2 * K + 1, dtype=bool)
    if K >= 1:
        keep[1:3] = False
    return np.flatnonzero(keep)


def project_bar(x: AngularField) -> AngularField:
    """L2(unit circle) projection removing the cos/sin(theta) component."""
    c = x.coefficients.copy()
    if x.K >= 1:
        c[1:3] = 0.0
    return AngularField(c)


def restrict_bar(op: LinearOperatorMatrix) -> LinearOperatorMatrix:
    """project_bar o op restricted to the barycenter-orthogonal subspace."""
    idx = barycenter_indices(op.K)
    kind = "Q_bar" if op.kind == "Q" else f"{op.kind}_bar"
    return LinearOperatorMatrix(op.matrix[np.ix_(idx, idx)], kind, op.geometry_id, indices=idx)
