"""Legendre polynomials on (-1, 1) and the growth of L2 projections of their antiderivatives."""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import legendre as npleg


def legendre(k: int, x):
    """``L_k(x)`` by the three-term recurrence."""
    if k < 0:
        raise ValueError("k must be non-negative")
    x = np.asarray(x, dtype=float)
    prev, cur = np.zeros_like(x), np.ones_like(x)
    for n in range(k):
        prev, cur = cur, ((2 * n + 1) * x * cur - n * prev) / (n + 1)
    return cur


def legendre_derivative(k: int, x):
    """``L_k'(x)`` from ``(2n+1) L_n = L_{n+1}' - L_{n-1}'``, summed downwards."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for n in range(k - 1, -1, -2):
        out = out + (2 * n + 1) * legendre(n, x)
    return out


def antiderivative(k: int, x):
    """``int_{-1}^x L_k = (L_{k+1}(x) - L_{k-1}(x)) / (2k+1)`` for ``k >= 1``.

    For ``k = 0`` the three-term form with ``L_{-1} = 0`` would give ``x``,
    which misses the constant; the integral itself, ``x + 1``, is returned.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    x = np.asarray(x, dtype=float)
    if k == 0:
        return x + 1.0
    return (legendre(k + 1, x) - legendre(k - 1, x)) / (2 * k + 1)


def growth_ratio(p: int) -> float:
    """``||(Pi_p Lhat_p)'|| / ||Lhat_p'||`` in closed form, ``sqrt(p(p-1) / (2(2p+1)))``."""
    if p < 1:
        raise ValueError("p must be at least 1")
    return math.sqrt(p * (p - 1) / (2.0 * (2 * p + 1)))


def growth_ratio_numeric(p: int) -> float:
    """Same ratio without the closed form.

    ``Lhat_p`` is built as a Legendre series, projected onto ``P_p`` with the
    orthonormal Legendre basis via Gauss quadrature, differentiated and
    integrated again by quadrature.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    x, w = npleg.leggauss(p + 3)
    c = npleg.legint(np.eye(p + 1)[p], lbnd=-1)
    vals = npleg.legval(x, c)
    scale = np.sqrt((2 * np.arange(p + 1) + 1) / 2.0)
    basis = npleg.legvander(x, p) * scale
    proj = basis.T @ (w * vals)
    proj_series = proj * scale
    num = np.sum(w * npleg.legval(x, npleg.legder(proj_series)) ** 2)
    den = np.sum(w * npleg.legval(x, npleg.legder(c)) ** 2)
    return math.sqrt(num / den)


def growth_table(ps) -> list[tuple[int, float, float]]:
    """Rows ``(p, ratio, ratio / sqrt(p))``."""
    return [(p, growth_ratio(p), growth_ratio(p) / math.sqrt(p)) for p in ps]
