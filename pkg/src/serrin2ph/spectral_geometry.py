"""Star-shaped two-phase geometries described as radial graphs.

The outer boundary is ``R(theta) = 1 + xi(theta)`` and the inclusion boundary
is ``r(theta) = rho + phi(theta)``, both truncated Fourier series.  Everything
downstream (state solver, shape calculus, continuation) works on these
objects through :class:`ReferenceMap`, which pulls each phase back to a fixed
reference layer in ``(s, theta)`` coordinates.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CutoffOrdering, GeometryError, InclusionOverlap, StarShapeViolation
from .spectral import fourier_nodes

INCLUSION_MARGIN = 0.05


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AngularField:
    """theta -> a0 + sum_k (a_k cos k theta + b_k sin k theta), k = 1..K.

    Coefficients are stored as ``(a0, a1, b1, ..., aK, bK)``.
    """

    coefficients: np.ndarray

    def __post_init__(self):
        c = _readonly(self.coefficients).ravel()
        if c.size % 2 == 0:
            raise ValueError("coefficient vector must have odd length 2K+1")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    # -- construction ---------------------------------------------------
    @classmethod
    def zeros(cls, K: int) -> "AngularField":
        return cls(np.zeros(2 * K + 1))

    @classmethod
    def constant(cls, value: float, K: int = 0) -> "AngularField":
        c = np.zeros(2 * K + 1)
        c[0] = value
        return cls(c)

    @classmethod
    def mode(cls, k: int, kind: str = "cos", amplitude: float = 1.0, K: int | None = None) -> "AngularField":
        K = k if K is None else K
        if k > K:
            raise ValueError("mode exceeds truncation order")
        c = np.zeros(2 * K + 1)
        c[basis_index(k, kind)] = amplitude
        return cls(c)

    @classmethod
    def from_values(cls, values, K: int) -> "AngularField":
        """Project samples at ``fourier_nodes(M)`` onto modes 0..K."""
        v = np.asarray(values, dtype=float)
        M = v.size
        if M < 2 * K + 1:
            raise ValueError(f"need M >= 2K+1 samples, got M={M}, K={K}")
        X = np.fft.rfft(v)
        c = np.empty(2 * K + 1)
        c[0] = X[0].real / M
        c[1::2] = 2.0 * X[1 : K + 1].real / M
        c[2::2] = -2.0 * X[1 : K + 1].imag / M
        return cls(c)

    @classmethod
    def from_function(cls, func: Callable, K: int, M: int | None = None) -> "AngularField":
        M = M or 4 * (2 * K + 1)
        return cls.from_values(func(fourier_nodes(M)), K)

    # -- basic properties -----------------------------------------------
    @property
    def K(self) -> int:
        return (self.coefficients.size - 1) // 2

    @property
    def a(self) -> np.ndarray:
        return np.concatenate([[self.coefficients[0]], self.coefficients[1::2]])

    @property
    def b(self) -> np.ndarray:
        return np.concatenate([[0.0], self.coefficients[2::2]])

    def cos_coeff(self, k: int) -> float:
        return float(self.coefficients[basis_index(k, "cos")]) if k <= self.K else 0.0

    def sin_coeff(self, k: int) -> float:
        if k == 0:
            return 0.0
        return float(self.coefficients[basis_index(k, "sin")]) if k <= self.K else 0.0

    # -- evaluation -----------------------------------------------------
    def values(self, M: int) -> np.ndarray:
        """Samples at the M uniform nodes 2*pi*j/M."""
        if M < 2 * self.K + 1:
            return self(fourier_nodes(M))
        X = np.zeros(M // 2 + 1, dtype=complex)
        X[0] = self.coefficients[0] * M
        K = self.K
        X[1 : K + 1] = (self.coefficients[1::2] - 1j * self.coefficients[2::2]) * M / 2
        return np.fft.irfft(X, n=M)

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        k = np.arange(1, self.K + 1)
        kt = np.multiply.outer(theta, k)
        return self.coefficients[0] + np.cos(kt) @ self.coefficients[1::2] + np.sin(kt) @ self.coefficients[2::2]

    def derivative(self, order: int = 1) -> "AngularField":
        if order == 0:
            return self
        a = self.coefficients[1::2]
        b = self.coefficients[2::2]
        k = np.arange(1, self.K + 1, dtype=float)
        for _ in range(order):
            a, b = k * b, -k * a
        c = np.zeros_like(self.coefficients)
        c[1::2] = a
        c[2::2] = b
        return AngularField(c)

    def resized(self, K: int) -> "AngularField":
        c = np.zeros(2 * K + 1)
        n = min(K, self.K)
        c[: 2 * n + 1] = self.coefficients[: 2 * n + 1]
        return AngularField(c)

    def parity_parts(self) -> tuple["AngularField", "AngularField"]:
        """Split into (even modes, odd modes); the even part is pi-periodic."""
        even = np.zeros_like(self.coefficients)
        odd = np.zeros_like(self.coefficients)
        even[0] = self.coefficients[0]
        for k in range(1, self.K + 1):
            target = even if k % 2 == 0 else odd
            target[2 * k - 1 : 2 * k + 1] = self.coefficients[2 * k - 1 : 2 * k + 1]
        return AngularField(even), AngularField(odd)

    def sup_norm(self, M: int | None = None) -> float:
        M = M or max(64, 8 * (2 * self.K + 1))
        return float(np.max(np.abs(self.values(M))))

    def l2_norm(self) -> float:
        """L2 norm over the unit circle."""
        c = self.coefficients
        return float(np.sqrt(2 * np.pi * c[0] ** 2 + np.pi * np.sum(c[1:] ** 2)))

    # -- arithmetic -----------------------------------------------------
    def _binary(self, other, op):
        if isinstance(other, AngularField):
            K = max(self.K, other.K)
            return AngularField(op(self.resized(K).coefficients, other.resized(K).coefficients))
        c = self.coefficients.copy()
        c[0] = op(c[0], other)
        return AngularField(c)

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __neg__(self):
        return AngularField(-self.coefficients)

    def __mul__(self, scalar):
        if isinstance(scalar, AngularField):
            return NotImplemented
        return AngularField(self.coefficients * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return AngularField(self.coefficients / float(scalar))

    def __repr__(self):
        return f"AngularField(K={self.K}, coefficients={np.array2string(self.coefficients, precision=4, threshold=9)})"


def basis_index(k: int, kind: str = "cos") -> int:
    """Position of cos k / sin k in the coefficient vector."""
    if k == 0:
        if kind != "cos":
            raise ValueError("sin 0 is not a basis element")
        return 0
    return 2 * k - 1 if kind == "cos" else 2 * k


def basis_labels(K: int) -> list[str]:
    labels = ["a0"]
    for k in range(1, K + 1):
        labels += [f"a{k}", f"b{k}"]
    return labels


def evaluation_matrix(K: int, M: int) -> np.ndarray:
    """M x (2K+1) matrix mapping coefficients to samples at the M nodes."""
    t = fourier_nodes(M)
    E = np.empty((M, 2 * K + 1))
    E[:, 0] = 1.0
    k = np.arange(1, K + 1)
    E[:, 1::2] = np.cos(np.outer(t, k))
    E[:, 2::2] = np.sin(np.outer(t, k))
    return E


def projection_matrix(K: int, M: int) -> np.ndarray:
    """(2K+1) x M discrete L2 projection; left inverse of ``evaluation_matrix``."""
    E = evaluation_matrix(K, M)
    P = E.T * (2.0 / M)
    P[0] *= 0.5
    return P


@dataclass(frozen=True, eq=False)
class GeometrySpec:
    """Outer graph R = 1 + xi and inclusion graph r = rho + phi."""

    outer_graph: AngularField
    inclusion_graph: AngularField
    rho: float
    margin: float = INCLUSION_MARGIN

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise GeometryError(f"base inclusion radius must lie in (0, 1), got {self.rho}")
        M = max(256, 8 * (2 * max(self.outer_graph.K, self.inclusion_graph.K) + 1))
        R = self.outer_values(M)
        r = self.inclusion_values(M)
        if R.min() <= 0:
            raise StarShapeViolation(f"outer radius reaches {R.min():.3g} <= 0")
        if r.min() <= 0:
            raise StarShapeViolation(f"inclusion radius reaches {r.min():.3g} <= 0")
        if r.max() + self.margin > R.min():
            raise InclusionOverlap(
                f"max inclusion radius {r.max():.4f} + margin {self.margin} exceeds min outer radius {R.min():.4f}"
            )

    @classmethod
    def concentric(cls, rho: float, K: int = 0) -> "GeometrySpec":
        return cls(AngularField.zeros(K), AngularField.zeros(K), rho)

    @classmethod
    def from_perturbations(cls, rho: float, xi: AngularField | None = None, phi: AngularField | None = None):
        return cls(xi if xi is not None else AngularField.zeros(0), phi if phi is not None else AngularField.zeros(0), rho)

    def with_outer(self, xi: AngularField) -> "GeometrySpec":
        return GeometrySpec(xi, self.inclusion_graph, self.rho, self.margin)

    def outer_radius(self) -> AngularField:
        return self.outer_graph + 1.0

    def inclusion_radius(self) -> AngularField:
        return self.inclusion_graph + self.rho

    def outer_values(self, M: int) -> np.ndarray:
        return 1.0 + self.outer_graph.values(M)

    def inclusion_values(self, M: int) -> np.ndarray:
        return self.rho + self.inclusion_graph.values(M)

    def area(self, M: int = 512) -> float:
        """|Omega| = (1/2) * integral of R^2 dtheta (trapezoid, exact for band-limited R)."""
        K = self.outer_graph.K
        M = max(M, 4 * K + 2)
        return float(0.5 * np.mean(self.outer_values(M) ** 2) * 2 * np.pi)

    @property
    def geometry_id(self) -> str:
        h = hashlib.sha1()
        h.update(np.float64(self.rho).tobytes())
        h.update(self.outer_graph.coefficients.tobytes())
        h.update(b"|")
        h.update(self.inclusion_graph.coefficients.tobytes())
        return h.hexdigest()[:12]


@dataclass(frozen=True, eq=False)
class BoundaryFrame:
    theta: np.ndarray
    radius: np.ndarray
    radius_prime: np.ndarray
    nodes: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    curvature: np.ndarray
    arclength_weight: np.ndarray

    @property
    def length(self) -> float:
        return float(self.arclength_weight.sum())

    @property
    def speed(self) -> np.ndarray:
        """|gamma'(theta)| = sqrt(R^2 + R'^2)."""
        return np.hypot(self.radius, self.radius_prime)


def frame_from_radius(radius: AngularField, M: int) -> BoundaryFrame:
    t = fourier_nodes(M)
    R = radius.values(M)
    R1 = radius.derivative(1).values(M)
    R2 = radius.derivative(2).values(M)
    speed = np.hypot(R, R1)
    er = np.stack([np.cos(t), np.sin(t)], axis=-1)
    et = np.stack([-np.sin(t), np.cos(t)], axis=-1)
    nodes = R[:, None] * er
    normal = (R[:, None] * er - R1[:, None] * et) / speed[:, None]
    tangent = (R1[:, None] * er + R[:, None] * et) / speed[:, None]
    curvature = (R**2 + 2 * R1**2 - R * R2) / speed**3
    weight = (2 * np.pi / M) * speed
    return BoundaryFrame(t, R, R1, nodes, normal, tangent, curvature, weight)


def build_frame(geom: GeometrySpec, which: str = "outer", M: int = 96) -> BoundaryFrame:
    if which == "outer":
        graph, radius = geom.outer_graph, geom.outer_radius()
    elif which == "inclusion":
        graph, radius = geom.inclusion_graph, geom.inclusion_radius()
    else:
        raise ValueError(f"unknown boundary {which!r}")
    if M < 2 * graph.K + 1:
        raise ValueError(f"M={M} too small for truncation K={graph.K}")
    return frame_from_radius(radius, M)


def smoothstep5(u):
    """Quintic with p(0)=0, p(1)=1 and vanishing first/second derivatives at both ends."""
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10 - 15 * u + 6 * u**2)


def default_cutoffs(geom: GeometrySpec | None = None) -> tuple[float, float]:
    inner, outer = 0.75, 1.5
    if geom is not None:
        rmax = geom.inclusion_values(512).max()
        if rmax + INCLUSION_MARGIN >= inner:
            inner = 0.5 * (rmax + 1.0)
    return inner, outer


@dataclass(frozen=True, eq=False)
class NormalExtension:
    """Vector field x -> xi(theta(x)) chi(|x|) x/|x| extending xi*n off the unit circle."""

    xi: AngularField
    cutoff_inner: float
    cutoff_outer: float

    def bump(self, t):
        t = np.asarray(t, dtype=float)
        a, b = self.cutoff_inner, self.cutoff_outer
        return np.where(
            t <= 1.0,
            smoothstep5((t - a) / (1.0 - a)),
            smoothstep5((b - t) / (b - 1.0)),
        )

    def __call__(self, points):
        p = np.asarray(points, dtype=float)
        rad = np.hypot(p[..., 0], p[..., 1])
        theta = np.arctan2(p[..., 1], p[..., 0])
        safe = np.where(rad > 0, rad, 1.0)
        scale = self.xi(theta) * self.bump(rad) / safe
        return p * scale[..., None]


def extend_normal_field(xi: AngularField, cutoff_inner: float = 0.75, cutoff_outer: float = 1.5) -> NormalExtension:
    if not 0.0 < cutoff_inner < 1.0 < cutoff_outer:
        raise CutoffOrdering(f"need 0 < {cutoff_inner} < 1 < {cutoff_outer}")
    return NormalExtension(xi, float(cutoff_inner), float(cutoff_outer))


# ---------------------------------------------------------------------------
# reference map


@dataclass(frozen=True)
class LayerCoords:
    """Physical radius F(s, theta) of a layer and its derivatives on a node grid."""

    F: np.ndarray
    Fs: np.ndarray
    Fss: np.ndarray
    Ft: np.ndarray
    Fst: np.ndarray
    Ftt: np.ndarray

    @property
    def jacobian_det(self) -> np.ndarray:
        return self.F * self.Fs

    def inverse_derivatives(self):
        """Derivatives of s(r, theta), the inverse of r = F(s, theta)."""
        Sr = 1.0 / self.Fs
        St = -self.Ft / self.Fs
        Srr = -self.Fss * Sr**2 / self.Fs
        Stt = -(self.Fss * St**2 + 2 * self.Fst * St + self.Ftt) / self.Fs
        Srt = -(self.Fss * St + self.Fst) * Sr / self.Fs
        return Sr, St, Srr, Stt, Srt

    def laplacian_coefficients(self):
        """Coefficients (c_ss, c_st, c_tt, c_s) with Lap u = c_ss w_ss + c_st w_st + c_tt w_tt + c_s w_s."""
        Sr, St, Srr, Stt, _ = self.inverse_derivatives()
        inv_r2 = 1.0 / self.F**2
        return (
            Sr**2 + St**2 * inv_r2,
            2.0 * St * inv_r2,
            inv_r2,
            Srr + Sr / self.F + Stt * inv_r2,
        )


class ReferenceMap:
    """Two-layer map from reference coordinates onto D_phi and Omega_xi minus D_phi.

    * inner layer, s in [-1, 1]:  radius = s*r_e(theta) + s^2*r_o(theta)
    * annulus,     s in [0, 1]:   radius = r(theta) + s*(R(theta) - r(theta))

    ``r_e``/``r_o`` are the even/odd-mode parts of ``r``.  The inner layer runs
    along full diameters, so (-s, theta) and (s, theta + pi) are the same
    physical point; for s in [0, 1] the inner radius coincides with s*r(theta)
    whenever r has only even modes.
    """

    def __init__(self, geom: GeometrySpec):
        self.geom = geom
        r = geom.inclusion_radius()
        self.R = geom.outer_radius()
        self.r = r
        self.r_even, self.r_odd = r.parity_parts()
        t = np.linspace(0, 2 * np.pi, 512, endpoint=False)
        fs_min = np.min(self.r_even(t) - 2 * np.abs(self.r_odd(t)))
        if fs_min <= 0:
            raise GeometryError("inclusion too eccentric for the inner-layer map")

    # -- grid evaluation --------------------------------------------------
    def layer_coords(self, layer: str, s: np.ndarray, M: int) -> LayerCoords:
        s = np.asarray(s, dtype=float)[:, None]
        shape = (s.shape[0], M)

        def full(a):
            return np.broadcast_to(a, shape).copy()

        if layer == "inner":
            a = [self.r_even.derivative(k).values(M) for k in range(3)]
            b = [self.r_odd.derivative(k).values(M) for k in range(3)]
            return LayerCoords(
                F=s * a[0] + s**2 * b[0],
                Fs=a[0] + 2 * s * b[0],
                Fss=full(2 * b[0]),
                Ft=s * a[1] + s**2 * b[1],
                Fst=a[1] + 2 * s * b[1],
                Ftt=s * a[2] + s**2 * b[2],
            )
        if layer == "annulus":
            r = [self.r.derivative(k).values(M) for k in range(3)]
            gap = [self.R.derivative(k).values(M) - r[k] for k in range(3)]
            return LayerCoords(
                F=r[0] + s * gap[0],
                Fs=full(gap[0]),
                Fss=np.zeros(shape),
                Ft=r[1] + s * gap[1],
                Fst=full(gap[1]),
                Ftt=r[2] + s * gap[2],
            )
        raise ValueError(f"unknown layer {layer!r}")

    # -- pointwise map ----------------------------------------------------
    def radius(self, layer: str, s, theta):
        s = np.asarray(s, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if layer == "inner":
            return s * self.r_even(theta) + s**2 * self.r_odd(theta)
        if layer == "annulus":
            r = self.r(theta)
            return r + s * (self.R(theta) - r)
        raise ValueError(f"unknown layer {layer!r}")

    def to_physical(self, layer: str, s, theta):
        F = self.radius(layer, s, theta)
        return F * np.cos(theta), F * np.sin(theta)

    def to_reference(self, layer: str, x, y):
        """Inverse map, returning s >= 0 for the inner layer."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        rad = np.hypot(x, y)
        theta = np.mod(np.arctan2(y, x), 2 * np.pi)
        if layer == "inner":
            a = self.r_even(theta)
            b = self.r_odd(theta)
            s = 2 * rad / (a + np.sqrt(a**2 + 4 * b * rad))
        elif layer == "annulus":
            r = self.r(theta)
            s = (rad - r) / (self.R(theta) - r)
        else:
            raise ValueError(f"unknown layer {layer!r}")
        return s, theta

    def jacobian_det(self, layer: str, s, theta):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if layer == "inner":
            a, b = self.r_even(theta), self.r_odd(theta)
            F = s * a + s**2 * b
            Fs = a + 2 * s * b
        else:
            r = self.r(theta)
            gap = self.R(theta) - r
            F = r + s * gap
            Fs = gap
        return F * Fs


def reference_map(geom: GeometrySpec) -> ReferenceMap:
    return ReferenceMap(geom)
