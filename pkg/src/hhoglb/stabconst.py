"""Stability constants of the Galerkin projection on a single triangle.

``m_p^2`` is the largest eigenvalue of ``a(q, r) = lambda b(q, r)`` on
``Q_p``, the L2-orthogonal complement of ``grad P_{p+1}(T)`` in
``P_p(T; R^2)``, with ``a`` the L2 product and
``b(q, r) = ((-Delta)^{-1} curl q, curl r)``.  The inverse Laplacian is
approximated by conforming Lagrange elements on a uniform sub-triangulation,
which underestimates ``b`` and so overestimates ``m_p^2`` slightly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bases import CellFrames, ScalarBasis, dim_p, eval_monomials
from .quadrature import quad_rule_triangle

DEFAULT_FEM = (4, 6)
RIGHT_ISOSCELES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def isosceles_triangle(omega: float) -> np.ndarray:
    """``conv{(0,0), (1,0), (cos omega, sin omega)}``."""
    if not 0.0 < omega < math.pi:
        raise ValueError("omega must lie in (0, pi)")
    return np.array([[0.0, 0.0], [1.0, 0.0], [math.cos(omega), math.sin(omega)]])


def _check_triangle(T) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    if T.shape != (3, 2):
        raise ValueError("a triangle is given by three vertices in the plane")
    d1, d2 = T[1] - T[0], T[2] - T[0]
    if abs(d1[0] * d2[1] - d1[1] * d2[0]) <= 1e-14 * max(1.0, np.abs(T).max()) ** 2:
        raise ValueError("degenerate triangle")
    return T


class _Polynomials:
    """Orthonormal hierarchical basis of ``P_N(T)`` with exact quadrature on ``T``."""

    def __init__(self, T: np.ndarray, N: int, quad_extra: int = 0):
        self.frames = CellFrames.from_vertices(T[None])
        self.N = N
        self.basis = ScalarBasis(self.frames, N)
        x, w = self.frames.cell_points(2 * N + quad_extra)
        self.x, self.w = x[0], w[0]
        vals, grads = self.basis.eval(x, grad=True)
        self.vals, self.grads = vals[0], grads[0]

    def stiffness(self) -> np.ndarray:
        return np.einsum("q,qid,qjd->ij", self.w, self.grads, self.grads)

    def gradient_coefficients(self, p: int) -> np.ndarray:
        """``D[k, i] = (psi_k, grad phi_i)`` for the basis ``psi = (phi_a e_1, phi_a e_2)`` of ``P_p^2``."""
        n = dim_p(p)
        psi = self.vals[:, :n]
        D = np.einsum("q,qa,qid->dai", self.w, psi, self.grads)
        return D.reshape(2 * n, -1)


@dataclass
class QpBasis:
    """Orthonormal basis of ``Q_p`` as coefficients in ``(phi_a e_1, phi_a e_2)``."""

    T: np.ndarray
    p: int
    coeffs: np.ndarray
    analytic: bool = False

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]


def build_Qp(T, p: int) -> QpBasis:
    """Orthonormal basis of the complement of ``grad P_{p+1}(T)`` in ``P_p(T; R^2)``.

    For ``p = 0`` the space is trivial; the basis is empty and flagged as the
    analytic case ``C_st2 = 1``.
    """
    T = _check_triangle(T)
    if p < 0:
        raise ValueError("p must be non-negative")
    if p == 0:
        return QpBasis(T, 0, np.zeros((2, 0)), analytic=True)
    poly = _Polynomials(T, p + 1)
    D = poly.gradient_coefficients(p)[:, 1:]
    Q = sla.null_space(D.T, rcond=1e-10)
    expected = (p + 1) * (p + 2) - ((p + 2) * (p + 3) // 2 - 1)
    if Q.shape[1] != expected:
        raise RuntimeError(f"dim Q_{p} = {Q.shape[1]}, expected {expected}")
    return QpBasis(T, p, Q)


def _lagrange_reference(d: int):
    """Nodes, exponents and monomial-to-nodal matrix of the degree-``d`` Lagrange element."""
    nodes = [(k, l) for l in range(d + 1) for k in range(d + 1 - l)]
    xi = np.array(nodes, dtype=float) / d
    vander, _ = eval_monomials(xi, d)
    return nodes, np.linalg.inv(vander)


class LatticeFEM:
    """Conforming degree-``d`` Lagrange FEM for ``-Delta w = g``, ``w = 0`` on ``dT``.

    The sub-triangulation splits ``T`` into ``4**levels`` congruent triangles.
    Every node sits on the barycentric lattice ``(i, j)``, ``i + j <= n`` with
    ``n = 2**levels * d``, so the global numbering needs no mesh data
    structure.  Downward sub-triangles are point reflections of upward ones,
    hence all elements share one local stiffness matrix.
    """

    def __init__(self, T, degree: int = DEFAULT_FEM[0], levels: int = DEFAULT_FEM[1]):
        if degree < 1 or levels < 0:
            raise ValueError("fem_config needs degree >= 1 and levels >= 0")
        self.T = _check_triangle(T)
        self.degree, self.levels = degree, levels
        d, M = degree, 2 ** levels
        n = M * d
        self.n = n
        nodes, coef = _lagrange_reference(d)
        loc = np.array(nodes)
        # lattice coordinates (i, j) of the local nodes of every element
        up = np.array([(a, b) for b in range(M) for a in range(M - b)])
        down = np.array([(a, b) for b in range(M - 1) for a in range(M - 1 - b)])
        lat = np.concatenate([up[:, None, :] * d + loc[None], (down[:, None, :] + 1) * d - loc[None]])
        index = -np.ones((n + 1, n + 1), dtype=np.int64)
        ii, jj = np.array([(i, j) for j in range(n + 1) for i in range(n + 1 - j)]).T
        index[ii, jj] = np.arange(len(ii))
        self.lattice = np.column_stack([ii, jj])
        self.elements = index[lat[..., 0], lat[..., 1]]
        self.n_up = len(up)
        self.boundary = (ii == 0) | (jj == 0) | (ii + jj == n)
        v0, e1, e2 = self.T[0], (self.T[1] - self.T[0]) / n, (self.T[2] - self.T[0]) / n
        self.points = v0 + ii[:, None] * e1 + jj[:, None] * e2
        J = np.column_stack([e1, e2]) * d  # reference element -> upward element
        self.det = abs(np.linalg.det(J))
        Jinv = np.linalg.inv(J)

        rule = quad_rule_triangle(2 * d)
        vals, grads = eval_monomials(rule.points, d)
        grads = np.einsum("qmd,mk->qkd", grads, coef) @ Jinv
        K_loc = np.einsum("q,qid,qjd->ij", rule.weights, grads, grads) * self.det
        n_el, n_loc = self.elements.shape
        rows = np.repeat(self.elements, n_loc, axis=1).ravel()
        cols = np.tile(self.elements, (1, n_loc)).ravel()
        K = sp.coo_matrix((np.tile(K_loc.ravel(), n_el), (rows, cols)), shape=(len(ii),) * 2).tocsc()
        self.free = np.flatnonzero(~self.boundary)
        K_ff = K[self.free][:, self.free]
        try:
            self._lu = spla.splu(K_ff.tocsc())
        except RuntimeError as exc:
            raise np.linalg.LinAlgError("singular FEM system") from exc
        self._K = K
        self._coef = coef
        self._J = J

    def load(self, g, degree: int) -> np.ndarray:
        """Load vectors ``(g_k, phi_i)`` for ``g(x) -> (nx, k)`` exact for polynomial ``g`` of ``degree``."""
        d = self.degree
        rule = quad_rule_triangle(degree + d)
        vals, _ = eval_monomials(rule.points, d)
        phi = vals @ self._coef  # (nq, n_loc)
        n_el = len(self.elements)
        sign = np.where(np.arange(n_el) < self.n_up, 1.0, -1.0)
        anchor = self.points[self.elements[:, 0]]
        x = anchor[:, None, :] + sign[:, None, None] * (rule.points @ self._J.T)[None]
        gx = np.asarray(g(x.reshape(-1, 2)), dtype=float).reshape(n_el, len(rule.weights), -1)
        local = np.einsum("q,qi,eqk->eik", rule.weights * self.det, phi, gx)
        out = np.zeros((len(self.points), gx.shape[-1]))
        np.add.at(out, self.elements.ravel(), local.reshape(-1, gx.shape[-1]))
        return out

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        w = np.zeros_like(rhs)
        w[self.free] = self._lu.solve(np.ascontiguousarray(rhs[self.free]))
        return w

    def energy(self, w: np.ndarray) -> np.ndarray:
        return np.einsum("ik,ik->k", w, self._K @ w) if w.ndim == 2 else float(w @ (self._K @ w))


@lru_cache(maxsize=16)
def _fem_cached(key: tuple, degree: int, levels: int) -> LatticeFEM:
    return LatticeFEM(np.array(key).reshape(3, 2), degree, levels)


def _fem(T: np.ndarray, fem_config) -> LatticeFEM:
    return _fem_cached(tuple(T.ravel()), int(fem_config[0]), int(fem_config[1]))


def _curl_evaluator(Q: QpBasis):
    """``x -> curl q_k(x)`` for all basis elements ``q_k`` of ``Q_p``."""
    frames = CellFrames.from_vertices(Q.T[None])
    basis = ScalarBasis(frames, Q.p)
    n = dim_p(Q.p)

    def curl(x):
        _, g = basis.eval(x[None], grad=True)
        g = g[0]
        # curl(phi e1) = -d2 phi, curl(phi e2) = d1 phi
        c = np.concatenate([-g[..., 1], g[..., 0]], axis=1)
        return c @ Q.coeffs

    return curl, n


def apply_inv_laplace(g, T, fem_config=DEFAULT_FEM, degree: int = 10) -> tuple[np.ndarray, LatticeFEM]:
    """Discrete ``(-Delta)^{-1} g`` with zero boundary values, as nodal values.

    ``g`` maps points ``(nx, 2)`` to values ``(nx,)`` or ``(nx, k)``;
    ``degree`` is the polynomial degree of ``g`` used for quadrature.
    """
    fem = _fem(_check_triangle(T), fem_config)
    rhs = fem.load(lambda x: np.asarray(g(x), dtype=float).reshape(len(x), -1), degree)
    return fem.solve(rhs), fem


def b_matrix(Q: QpBasis, fem_config=DEFAULT_FEM) -> np.ndarray:
    """Gram matrix ``b(q_i, q_j) = g_i^T K^{-1} g_j`` on ``Q_p``."""
    if Q.dim == 0:
        return np.zeros((0, 0))
    fem = _fem(Q.T, fem_config)
    curl, _ = _curl_evaluator(Q)
    rhs = fem.load(curl, max(Q.p - 1, 0))
    w = fem.solve(rhs)
    B = rhs.T @ w
    return 0.5 * (B + B.T)


@dataclass
class StabConstResult:
    p: int
    m_p_sq: float
    c_st2_upper: float
    lower_c_st1: float
    lower_c_st2: float
    fem_config: tuple[int, int]
    analytic: bool = False


def compute_mp(T=RIGHT_ISOSCELES, p: int = 1, fem_config=DEFAULT_FEM, rayleigh_N: int | None = None) -> StabConstResult:
    """``m_p^2``, the upper bound ``max{1, m_p}`` and Rayleigh lower bounds.

    For ``p = 0`` the value ``C_st2 = 1`` is exact and returned as such.
    """
    T = _check_triangle(T)
    N = rayleigh_N if rayleigh_N is not None else p + 6
    low1, low2 = rayleigh_lower_bounds(T, p, N)
    Q = build_Qp(T, p)
    if Q.analytic:
        return StabConstResult(0, 1.0, 1.0, low1, low2, tuple(fem_config), analytic=True)
    B = b_matrix(Q, fem_config)
    mu = sla.eigvalsh(B)
    if mu[0] <= 1e-12 * mu[-1]:
        raise np.linalg.LinAlgError("b is numerically singular on Q_p (curl-free element in Q_p)")
    m_sq = float(1.0 / mu[0])
    return StabConstResult(p, m_sq, max(1.0, math.sqrt(m_sq)), low1, low2, tuple(fem_config))


def rayleigh_lower_bounds(T, p: int, N: int) -> tuple[float, float]:
    """Lower bounds for ``C_st1`` and ``C_st2`` as suprema over ``P_N(T)``.

    ``C_st2 >= sup |||(1-G) f||| / ||(1-Pi_p) grad f||`` and
    ``C_st1 >= sup |||(1-Pi_{p+1}) f||| / ||(1-Pi_p) grad f||``, with
    ``|||.||| = ||grad .||``.  All three forms vanish on ``P_{p+1}(T)``, so the
    quotients live on the span of the hierarchical basis functions beyond
    ``P_{p+1}``, where the denominator is definite.
    """
    T = _check_triangle(T)
    if N < p + 2:
        raise ValueError("N must be at least p + 2")
    poly = _Polynomials(T, N)
    K = poly.stiffness()
    D = poly.gradient_coefficients(p)
    den = K - D.T @ D
    a = np.arange(1, dim_p(p + 1))
    tail = np.arange(dim_p(p + 1), dim_p(N))
    # |||(1-G) f|||^2 = f^T (K - K_:a K_aa^{-1} K_a:) f
    schur = K - K[:, a] @ np.linalg.solve(K[np.ix_(a, a)], K[a, :])
    num2 = schur[np.ix_(tail, tail)]
    num1 = K[np.ix_(tail, tail)]
    den = den[np.ix_(tail, tail)]
    den = 0.5 * (den + den.T)
    c1 = sla.eigh(0.5 * (num1 + num1.T), den, eigvals_only=True)[-1]
    c2 = sla.eigh(0.5 * (num2 + num2.T), den, eigvals_only=True)[-1]
    return math.sqrt(c1), math.sqrt(c2)


def angle_sweep(omegas, p: int, fem_config=DEFAULT_FEM) -> list[tuple[float, float]]:
    """``(omega, m_p^2)`` on the isosceles triangles with apex angle ``omega`` at the origin."""
    out = []
    for omega in omegas:
        T = isosceles_triangle(float(omega))
        Q = build_Qp(T, p)
        if Q.analytic:
            out.append((float(omega), 1.0))
            continue
        mu = sla.eigvalsh(b_matrix(Q, fem_config))
        out.append((float(omega), float(1.0 / mu[0])))
    return out


STAB_CSV_HEADER = ("p", "m_p_sq", "c_st2_upper", "lower_c_st1", "lower_c_st2", "fem_degree", "fem_refines")


def write_stabconst_csv(results, path_or_file) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STAB_CSV_HEADER)
        for r in results:
            w.writerow([r.p, "%.17g" % r.m_p_sq, "%.17g" % r.c_st2_upper, "%.17g" % r.lower_c_st1,
                        "%.17g" % r.lower_c_st2, r.fem_config[0], r.fem_config[1]])
    finally:
        if own:
            fh.close()


def write_sweep_csv(rows, p: int, path_or_file) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("omega", "p", "m_p_sq"))
        for omega, m in rows:
            w.writerow(["%.17g" % omega, p, "%.17g" % m])
    finally:
        if own:
            fh.close()
