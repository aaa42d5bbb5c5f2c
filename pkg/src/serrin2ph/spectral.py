"""Chebyshev and Fourier collocation primitives.

Node conventions follow Trefethen, *Spectral Methods in MATLAB*: Chebyshev
Gauss-Lobatto nodes are ordered from +1 down to -1, Fourier nodes are
``2*pi*j/M`` for ``j = 0..M-1``.
"""
from __future__ import annotations

import numpy as np
from numpy.polynomial import chebyshev as cheb


def cheb_nodes(n: int) -> np.ndarray:
    """Gauss-Lobatto nodes cos(pi*i/(n-1)), i = 0..n-1 (descending)."""
    if n < 2:
        raise ValueError("need at least two Chebyshev nodes")
    # sin form keeps the nodes exactly antisymmetric
    return np.sin(np.pi * (n - 1 - 2 * np.arange(n)) / (2 * (n - 1)))


def cheb_diff(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (nodes, D) with D the first-derivative matrix on [-1, 1]."""
    x = cheb_nodes(n)
    c = np.ones(n)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n)
    X = np.tile(x, (n, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(n))
    D -= np.diag(D.sum(axis=1))
    return x, D


def clenshaw_curtis_weights(n: int) -> np.ndarray:
    """Quadrature weights on [-1, 1] for the Lobatto nodes of ``cheb_nodes``."""
    return interval_weights(n, -1.0, 1.0)


def interval_weights(n: int, a: float, b: float) -> np.ndarray:
    """Weights integrating the Chebyshev interpolant over [a, b] within [-1, 1].

    The interpolant lives on all n Lobatto nodes, so a sub-interval such as
    [0, 1] is integrated without losing spectral accuracy.
    """
    x = cheb_nodes(n)
    V = cheb.chebvander(x, n - 1)
    moments = np.empty(n)
    for k in range(n):
        e = np.zeros(k + 1)
        e[k] = 1.0
        anti = cheb.chebint(e)
        moments[k] = cheb.chebval(b, anti) - cheb.chebval(a, anti)
    # w solves V^T w = moments so that w @ f = integral of interpolant
    return np.linalg.solve(V.T, moments)


def fourier_nodes(M: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(M) / M


def fourier_diff(M: int) -> tuple[np.ndarray, np.ndarray]:
    """First and second periodic differentiation matrices for even M."""
    if M % 2:
        raise ValueError("Fourier grid size must be even")
    h = 2.0 * np.pi / M
    i = np.arange(M)
    diff = i[:, None] - i[None, :]
    sign = (-1.0) ** diff
    off = diff != 0
    D1 = np.zeros((M, M))
    D1[off] = 0.5 * sign[off] / np.tan(diff[off] * h / 2)
    D2 = np.empty((M, M))
    D2[off] = -0.5 * sign[off] / np.sin(diff[off] * h / 2) ** 2
    np.fill_diagonal(D2, -np.pi**2 / (3 * h**2) - 1.0 / 6.0)
    return D1, D2
