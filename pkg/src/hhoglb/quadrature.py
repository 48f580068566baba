"""Quadrature rules on the reference triangle and the unit interval.

The triangle rules are collapsed (Duffy) tensor products of a Gauss-Legendre
rule and a Gauss-Jacobi rule with weight ``(1 - t)``.  They are not the most
economical rules available but they are exact to any requested degree, which
is what the assembly needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_TRIANGLE_DEGREE = 30


class QuadratureRuleUnavailable(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights on a reference element.

    For the triangle the reference element is ``conv{(0,0), (1,0), (0,1)}``
    and the weights sum to 1/2; for the interval it is ``[0, 1]``.
    """

    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    def __len__(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=None)
def quad_rule_triangle(degree: int) -> QuadratureRule:
    """Collapsed Gauss rule on the reference triangle, exact for ``P_degree``."""
    if not 0 <= degree <= MAX_TRIANGLE_DEGREE:
        raise QuadratureRuleUnavailable(f"unsupported triangle degree: {degree}")
    n = degree // 2 + 1
    zs, ws = roots_legendre(n)
    zt, wt = roots_jacobi(n, 1.0, 0.0)
    s = (zs + 1.0) / 2.0
    t = (zt + 1.0) / 2.0
    ws = ws / 2.0
    wt = wt / 4.0
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    pts = np.column_stack([(S * (1.0 - T)).ravel(), T.ravel()])
    rule = QuadratureRule(pts, W.ravel(), degree)
    rule.points.setflags(write=False)
    rule.weights.setflags(write=False)
    return rule


@lru_cache(maxsize=None)
def quad_rule_interval(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on ``[0, 1]`` exact for ``P_degree``."""
    if degree < 0:
        raise QuadratureRuleUnavailable(f"unsupported interval degree: {degree}")
    n = degree // 2 + 1
    z, w = roots_legendre(n)
    rule = QuadratureRule((z + 1.0) / 2.0, w / 2.0, degree)
    rule.points.setflags(write=False)
    rule.weights.setflags(write=False)
    return rule
