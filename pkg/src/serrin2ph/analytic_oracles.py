"""Closed-form references independent of the spectral engine.

Radial two-phase torsion profiles for any dimension N, the per-mode
transmission solve at a concentric base, and the ball eigenvalues of Q.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularSystem


@dataclass(frozen=True)
class RadialProfile:
    """u(r) = const_i + quad_i * r^2 on each phase [0, rho] and [rho, R]."""

    breakpoints: tuple[float, float, float]
    inner: tuple[float, float]
    outer: tuple[float, float]
    c_value: float
    sigma_c: float = 1.0
    N: int = 2

    def _coeffs(self, r):
        r = np.asarray(r, dtype=float)
        inside = r <= self.breakpoints[1]
        a = np.where(inside, self.inner[0], self.outer[0])
        b = np.where(inside, self.inner[1], self.outer[1])
        return r, a, b

    def __call__(self, r):
        r, a, b = self._coeffs(r)
        return a + b * r**2

    def derivative(self, r):
        r, _, b = self._coeffs(r)
        return 2 * b * r

    def second_derivative(self, r):
        r, _, b = self._coeffs(r)
        return 2 * b + 0 * r


def radial_two_phase(rho: float, sigma_c: float, N: int = 2, R: float = 1.0) -> RadialProfile:
    """Radial solution of -div(sigma grad u) = 1 on the ball of radius R.

    The divergence theorem on B_r gives sigma u'(r) = -r/N, so each phase is a
    quadratic; constants follow from u(R) = 0 and continuity at rho.
    """
    if not 0 < rho < R:
        raise ValueError("need 0 < rho < R")
    if sigma_c <= 0:
        raise ValueError("sigma_c must be positive")
    if N < 2:
        raise ValueError("N must be at least 2")
    b_out = -1.0 / (2 * N)
    b_in = -1.0 / (2 * N * sigma_c)
    a_out = R**2 / (2 * N)
    a_in = a_out + (b_out - b_in) * rho**2
    return RadialProfile((0.0, rho, R), (a_in, b_in), (a_out, b_out), R / N, sigma_c, N)


@dataclass(frozen=True)
class ModeSolution:
    k: int
    A: float
    B: float
    C: float
    dn_trace: float


def _branches(k: int, N: int, rho: float):
    """Second radial harmonic branch, scaled to be O(1) at rho, and its derivative."""
    if k == 0 and N == 2:
        return np.log, lambda r: 1.0 / r
    p = 2 - N - k
    return (lambda r: (r / rho) ** p), (lambda r: p * (r / rho) ** p / r)


def mode_transmission(k: int, rho: float, sigma_c: float, N: int = 2, value: float = 1.0) -> ModeSolution:
    """Harmonic transmission field for a single mode with outer Dirichlet coefficient ``value``.

    w = A r^k inside, B r^k + C h(r) outside, with h = r^{2-N-k} (log r if
    N = 2, k = 0).  Unknowns come from continuity, sigma-flux continuity at rho
    and w(1) = value.  ``dn_trace`` is w'(1).  Internally the inner and decaying
    branches are normalised at rho so the system stays well conditioned for large k.
    """
    if k < 0 or not 0 < rho < 1 or sigma_c <= 0:
        raise ValueError("need k >= 0, 0 < rho < 1, sigma_c > 0")
    h, dh = _branches(k, N, rho)
    rk = rho**k
    dk = k / rho
    M = np.array(
        [
            [1.0, -rk, -h(rho)],
            [sigma_c * dk, -dk * rk, -dh(rho)],
            [0.0, 1.0, h(1.0)],
        ]
    )
    if np.linalg.cond(M) > 1e12:
        raise SingularSystem(f"mode {k} transmission system is singular")
    a, b, c = np.linalg.solve(M, np.array([0.0, 0.0, value]))
    dn = b * k + c * dh(1.0)
    # undo the normalisation: inner (r/rho)^k and decaying (r/rho)^p
    A = a / rk
    C = c if (k == 0 and N == 2) else c * rho ** (N + k - 2)
    return ModeSolution(k, float(A), float(b), float(C), float(dn))


def gamma_mode(k: int, rho: float, sigma_c: float, N: int = 2) -> float:
    """Eigenvalue of Gamma on mode k at the concentric base of outer radius 1.

    The state has d_n u = -1/N and d2_nn u = -1/N on the unit sphere, so
    Gamma(Y_k) = d_n u'[Y_k] - 1/N with u' carrying Dirichlet value 1/N.
    """
    return mode_transmission(k, rho, sigma_c, N, 1.0 / N).dn_trace - 1.0 / N


def ball_Q_eigenvalue(k: int, N: int = 2) -> float:
    if k < 0 or N < 2:
        raise ValueError("need k >= 0 and N >= 2")
    return -2.0 * (k - 1) / N**2


def ball_gamma_eigenvalue(k: int, N: int = 2) -> float:
    """(k - 1)/N: Q = -2c Gamma with c = 1/N."""
    return ball_Q_eigenvalue(k, N) / (-2.0 / N)


def translated_circle_graph(a: float, b: float = 0.0):
    """Radial graph of the unit circle centred at (a, b): theta -> R(theta)."""

    def R(theta):
        theta = np.asarray(theta, dtype=float)
        p = a * np.cos(theta) + b * np.sin(theta)
        q = a * np.sin(theta) - b * np.cos(theta)
        return p + np.sqrt(1.0 - q**2)

    return R
