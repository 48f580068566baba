"""Orthonormal polynomial bases on triangles and edges, L2 and Galerkin projections.

Scalar bases are the orthonormal Dubiner polynomials on the reference
triangle, pulled back through the affine map of each cell.  They are
hierarchical: the leading ``dim P_k`` functions of a degree-``m`` basis span
``P_k(T)`` for every ``k <= m``.  Vector-valued bases are expanded in the
scalar ones, so all local matrices depend only on the shape of the cell.

All routines work on stacks of cells; the leading axis is the cell index.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import eval_jacobi

from .quadrature import quad_rule_interval, quad_rule_triangle


def dim_p(m: int) -> int:
    """Dimension of ``P_m`` in two variables (0 for ``m < 0``)."""
    return (m + 1) * (m + 2) // 2 if m >= 0 else 0


def dim_rt(p: int) -> int:
    return (p + 1) * (p + 3)


@lru_cache(maxsize=None)
def monomial_exponents(m: int) -> tuple[tuple[int, int], ...]:
    """Graded exponent list ``(a, b)`` of ``xi**a * eta**b`` with ``a + b <= m``."""
    return tuple((k - j, j) for k in range(m + 1) for j in range(k + 1))


def eval_monomials(xi: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Values ``(..., nm)`` and gradients ``(..., nm, 2)`` of monomials at local points."""
    x = xi[..., 0]
    y = xi[..., 1]
    exps = monomial_exponents(m)
    px = [np.ones_like(x)]
    py = [np.ones_like(y)]
    for _ in range(m):
        px.append(px[-1] * x)
        py.append(py[-1] * y)
    vals = np.stack([px[a] * py[b] for a, b in exps], axis=-1)
    zero = np.zeros_like(x)
    dx = np.stack([a * px[a - 1] * py[b] if a > 0 else zero for a, b in exps], axis=-1)
    dy = np.stack([b * px[a] * py[b - 1] if b > 0 else zero for a, b in exps], axis=-1)
    return vals, np.stack([dx, dy], axis=-1)


def _scaled_legendre(t, s, m: int, dt, ds):
    """``Q_a(t, s) = s^a L_a(t / s)`` for ``a <= m`` with partial derivatives.

    Built by the division-free recurrence
    ``(a+1) Q_{a+1} = (2a+1) t Q_a - a s^2 Q_{a-1}``; ``dt``/``ds`` are the
    reference-coordinate gradients of ``t`` and ``s``.
    """
    one = np.ones_like(t)
    Q = [one, t]
    dQ = [np.zeros(t.shape + (2,)), np.broadcast_to(dt, t.shape + (2,))]
    for a in range(1, m):
        Q.append(((2 * a + 1) * t * Q[a] - a * s * s * Q[a - 1]) / (a + 1))
        dQ.append(
            (
                (2 * a + 1) * (dt * Q[a][..., None] + t[..., None] * dQ[a])
                - a * (2 * s[..., None] * ds * Q[a - 1][..., None] + (s * s)[..., None] * dQ[a - 1])
            )
            / (a + 1)
        )
    return Q, dQ


def eval_dubiner(xh: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal Dubiner basis of ``P_m`` on ``conv{(0,0),(1,0),(0,1)}``.

    ``phi_ab = s^a L_a(t/s) P_b^{(2a+1,0)}(2y-1)`` with ``t = 2x-1+y`` and
    ``s = 1-y``, in the graded order of :func:`monomial_exponents`.  Returns
    values ``(..., nm)`` and reference gradients ``(..., nm, 2)``.
    """
    x, y = xh[..., 0], xh[..., 1]
    t, s = 2.0 * x - 1.0 + y, 1.0 - y
    Q, dQ = _scaled_legendre(t, s, m, np.array([2.0, 1.0]), np.array([0.0, -1.0]))
    v = 2.0 * y - 1.0
    vals, grads = [], []
    for a, b in monomial_exponents(m):
        P = eval_jacobi(b, 2 * a + 1, 0, v)
        dP = 0.5 * (b + 2 * a + 2) * eval_jacobi(b - 1, 2 * a + 2, 1, v) if b > 0 else np.zeros_like(v)
        # ||phi_ab||^2 = 1 / (2 (2a+1)(a+b+1)) on the reference triangle
        c = np.sqrt(2.0 * (2 * a + 1) * (a + b + 1))
        vals.append(c * Q[a] * P)
        g = dQ[a] * P[..., None]
        g[..., 1] += Q[a] * 2.0 * dP
        grads.append(c * g)
    return np.stack(vals, axis=-1), np.stack(grads, axis=-2)


def _orthonormalise(values: np.ndarray) -> np.ndarray:
    """Lower-triangular ``C`` making the functions ``C @ f`` orthonormal.

    ``values`` has shape ``(nc, nrows, n)``: quadrature-weighted samples of
    ``n`` functions, scaled by the square root of the weights.  A Householder
    QR avoids squaring the condition number as a Cholesky factor of the Gram
    matrix would; the diagonal is made positive so the result is unique.
    """
    R = np.linalg.qr(values, mode="r")
    s = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    R = R * s[..., :, None]
    eye = np.broadcast_to(np.eye(R.shape[-1]), R.shape)
    return np.swapaxes(np.linalg.solve(R, eye), -1, -2)


@dataclass
class CellFrames:
    """Geometry of a stack of triangles.

    ``vertices`` has shape ``(nc, 3, 2)``, positively oriented.
    """

    vertices: np.ndarray
    centroid: np.ndarray
    diameter: np.ndarray
    area: np.ndarray

    @classmethod
    def from_vertices(cls, vertices) -> "CellFrames":
        v = np.asarray(vertices, dtype=float)
        if v.ndim == 2:
            v = v[None]
        e01 = v[:, 1] - v[:, 0]
        e02 = v[:, 2] - v[:, 0]
        area = 0.5 * (e01[:, 0] * e02[:, 1] - e01[:, 1] * e02[:, 0])
        if np.any(area <= 0):
            raise ValueError("triangles must be positively oriented with positive area")
        lengths = np.linalg.norm(v[:, [1, 2, 0]] - v[:, [2, 0, 1]], axis=-1)
        return cls(v, v.mean(axis=1), lengths.max(axis=1), area)

    def __len__(self) -> int:
        return len(self.area)

    def cell_points(self, degree: int) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature points ``(nc, nq, 2)`` and weights ``(nc, nq)`` exact for ``P_degree``."""
        rule = quad_rule_triangle(degree)
        lam = np.column_stack([1.0 - rule.points.sum(axis=1), rule.points])
        x = np.einsum("qi,cik->cqk", lam, self.vertices)
        w = 2.0 * self.area[:, None] * rule.weights[None, :]
        return x, w

    def edge_points(self, degree: int, starts: np.ndarray, ends: np.ndarray):
        """Gauss points on the three edges of every cell.

        ``starts``/``ends`` have shape ``(nc, 3, 2)`` and fix the direction of
        the parametrisation on each edge.  Returns the points ``(nc, 3, ng, 2)``,
        weights ``(nc, 3, ng)`` and the parameters ``t`` ``(ng,)``.
        """
        rule = quad_rule_interval(degree)
        t = rule.points
        x = starts[:, :, None, :] + t[None, None, :, None] * (ends - starts)[:, :, None, :]
        length = np.linalg.norm(ends - starts, axis=-1)
        w = length[:, :, None] * rule.weights[None, None, :]
        return x, w, t

    def outward_normals(self) -> np.ndarray:
        """Unit outward normals ``(nc, 3, 2)``; local edge ``i`` is opposite vertex ``i``."""
        v = self.vertices
        d = v[:, [2, 0, 1]] - v[:, [1, 2, 0]]
        n = np.stack([d[..., 1], -d[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)


class ScalarBasis:
    """L2-orthonormal, hierarchical basis of ``P_m(T)`` on each cell of a stack.

    The Dubiner basis is pulled back through the affine map from the
    reference triangle; affine maps scale L2 products by the constant
    ``2|T|``, so no orthonormalisation is needed.
    """

    def __init__(self, frames: CellFrames, m: int):
        self.frames = frames
        self.degree = m
        self.size = dim_p(m)
        v = frames.vertices
        J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)
        self.jac_inv = np.linalg.inv(J)
        self.scale = 1.0 / np.sqrt(2.0 * frames.area)

    def reference_coordinates(self, x: np.ndarray) -> np.ndarray:
        shape = (len(self.frames),) + (1,) * (x.ndim - 2) + (2,)
        d = x - self.frames.vertices[:, 0].reshape(shape)
        return np.einsum("cij,c...j->c...i", self.jac_inv, d)

    def eval(self, x: np.ndarray, grad: bool = False):
        """Values ``(nc, ..., nb)`` (and physical gradients ``(nc, ..., nb, 2)``) at global points."""
        vals, dvals = eval_dubiner(self.reference_coordinates(x), self.degree)
        shape = (len(self.frames),) + (1,) * (vals.ndim - 1)
        s = self.scale.reshape(shape)
        phi = vals * s
        if not grad:
            return phi
        # grad_x = J^{-T} grad_ref
        g = np.einsum("cji,c...mj->c...mi", self.jac_inv, dvals)
        return phi, g * s[..., None]


class VectorBasis:
    """L2-orthonormal basis of ``P_p(T; R^2)`` or ``RT_p(T)`` on each cell.

    The leading ``(p+1)(p+2)`` functions are ``phi_k e_1, phi_k e_2`` for the
    orthonormal scalar basis ``phi_k`` of ``P_p(T)``, so the L2 projection of
    an RT field onto ``P_p(T; R^2)`` is a truncation of its coefficient
    vector.  For ``RT_p`` the fields ``(x - v_0) phi_k`` with ``deg phi_k = p``
    follow, orthonormalised against the leading block.  ``coeffs[c, i, d, j]``
    is the coefficient of ``phi_j e_d`` in basis function ``i``, ``phi_j`` from
    the degree-``p+1`` scalar basis.
    """

    def __init__(self, frames: CellFrames, p: int, rt: bool = True, passes: int = 2):
        self.frames = frames
        self.p = p
        self.rt = rt
        self.scalar = ScalarBasis(frames, p + 1)
        nc, n, npp = len(frames), dim_p(p + 1), dim_p(p)
        span = np.zeros((nc, 2 * npp, 2, n))
        for k in range(npp):
            span[:, 2 * k, 0, k] = 1.0
            span[:, 2 * k + 1, 1, k] = 1.0
        if rt:
            x, w = frames.cell_points(2 * p + 2)
            phi = self.scalar.eval(x)
            rel = x - frames.vertices[:, None, 0]
            top = phi[..., dim_p(p - 1):npp]
            # (x - v0) phi_k expanded in phi_j e_d, exact by quadrature
            extra = np.einsum("cq,cqd,cqk,cqj->ckdj", w, rel, top, phi)
            span = np.concatenate([span, extra], axis=1)
            for _ in range(passes):
                psi = np.einsum("cqj,cidj->cqdi", phi, span) * np.sqrt(w)[..., None, None]
                C = _orthonormalise(psi.reshape(nc, -1, span.shape[1]))
                span = np.einsum("cij,cjdm->cidm", C, span)
        self.coeffs = span
        self.size = span.shape[1]

    @property
    def n_pp(self) -> int:
        """Number of leading functions spanning ``P_p(T; R^2)``."""
        return (self.p + 1) * (self.p + 2)

    def eval(self, x: np.ndarray, derivatives: bool = False):
        """Physical values ``(nc, ..., nb, 2)``; optionally ``div`` and ``curl`` ``(nc, ..., nb)``."""
        if not derivatives:
            phi = self.scalar.eval(x)
            return np.einsum("c...j,cidj->c...id", phi, self.coeffs)
        phi, g = self.scalar.eval(x, grad=True)
        vals = np.einsum("c...j,cidj->c...id", phi, self.coeffs)
        jac = np.einsum("c...jl,cidj->c...idl", g, self.coeffs)
        div = jac[..., 0, 0] + jac[..., 1, 1]
        curl = jac[..., 1, 0] - jac[..., 0, 1]
        return vals, div, curl


def face_basis(t: np.ndarray, p: int, length) -> np.ndarray:
    """Orthonormal Legendre basis of ``P_p(F)`` at parameters ``t`` in ``[0, 1]``.

    Returns shape ``length.shape + t.shape + (p+1,)``.
    """
    from numpy.polynomial.legendre import legvander

    length = np.asarray(length, dtype=float)
    V = legvander(2.0 * np.asarray(t) - 1.0, p)
    scale = np.sqrt(2.0 * np.arange(p + 1) + 1.0)
    return V * scale / np.sqrt(length)[..., None, None]


# -- single-triangle projections ------------------------------------------------


def _vectorised(f, x):
    return np.asarray(f(x[..., 0], x[..., 1]), dtype=float)


def l2_project_cell(f, vertices, m: int, quad_degree: int | None = None) -> np.ndarray:
    """Coefficients of ``Pi_m f`` in the orthonormal ``P_m`` basis of one triangle.

    ``f(x, y)`` must accept arrays.  The default quadrature degree ``2m + 8``
    is exact for polynomial data up to degree ``m + 8``.
    """
    frames = CellFrames.from_vertices(vertices)
    basis = ScalarBasis(frames, m)
    x, w = frames.cell_points(quad_degree if quad_degree is not None else 2 * m + 8)
    return np.einsum("cq,cqi,cq->ci", w, basis.eval(x), _vectorised(f, x))[0]


def l2_project_rt(v, vertices, p: int, quad_degree: int | None = None) -> np.ndarray:
    """Coefficients of ``Pi_RT v`` in the orthonormal ``RT_p`` basis of one triangle.

    ``v(x, y)`` returns a pair ``(v1, v2)``.
    """
    frames = CellFrames.from_vertices(vertices)
    basis = VectorBasis(frames, p)
    x, w = frames.cell_points(quad_degree if quad_degree is not None else 2 * p + 10)
    vals = np.moveaxis(np.asarray(v(x[..., 0], x[..., 1]), dtype=float), 0, -1)
    if np.linalg.cond(np.einsum("cq,cqik,cqjk->cij", w, basis.eval(x), basis.eval(x))[0]) > 1e8:
        raise np.linalg.LinAlgError("ill-conditioned RT Gram matrix")
    return np.einsum("cq,cqik,cqk->ci", w, basis.eval(x), vals)[0]


def galerkin_project(grad_f, mean_f: float, vertices, m: int, quad_degree: int | None = None):
    """Galerkin projection ``G f`` onto ``P_m(T)`` of one triangle.

    ``grad_f(x, y)`` returns the gradient pair of ``f`` and ``mean_f`` is the
    integral mean of ``f`` over the triangle.  Returns coefficients in the
    orthonormal ``P_m`` basis.
    """
    frames = CellFrames.from_vertices(vertices)
    basis = ScalarBasis(frames, m)
    x, w = frames.cell_points(quad_degree if quad_degree is not None else 2 * m + 8)
    _, g = basis.eval(x, grad=True)
    df = np.moveaxis(np.asarray(grad_f(x[..., 0], x[..., 1]), dtype=float), 0, -1)
    K = np.einsum("cq,cqik,cqjk->cij", w, g, g)[0]
    rhs = np.einsum("cq,cqik,cqk->ci", w, g, df)[0]
    coef = np.empty(basis.size)
    # phi_0 is the normalised constant and the others have zero mean
    coef[0] = mean_f * np.sqrt(frames.area[0])
    if basis.size > 1:
        try:
            coef[1:] = np.linalg.solve(K[1:, 1:], rhs[1:])
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("singular stiffness block (degenerate triangle)") from exc
    return coef


def eval_cell_function(coeffs, vertices, m: int, x: np.ndarray) -> np.ndarray:
    """Evaluate a ``P_m`` function given by basis coefficients at global points ``(npts, 2)``."""
    frames = CellFrames.from_vertices(vertices)
    basis = ScalarBasis(frames, m)
    return basis.eval(np.asarray(x, dtype=float)[None])[0] @ np.asarray(coeffs)
