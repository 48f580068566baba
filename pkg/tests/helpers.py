"""Shared oracles and generators for the test-suite."""

from __future__ import annotations

from math import factorial

import numpy as np
import scipy.linalg as sla
from numpy.polynomial import polynomial as P

from hhoglb.bases import ScalarBasis, VectorBasis
from hhoglb.mesh import Mesh, bisect, build_mesh, uniform_refine

SQUARE4_V = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]], dtype=float)
SQUARE4_T = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
SQUARE2_V = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
SQUARE2_T = np.array([[0, 1, 2], [0, 2, 3]])
REF_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def monomial_integral_reference(a: int, b: int) -> float:
    """Exact ``int x^a y^b`` over ``conv{(0,0),(1,0),(0,1)}``."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


class Poly2D:
    """Bivariate polynomial with exact gradient, callable on arrays."""

    def __init__(self, coeffs: np.ndarray):
        self.c = np.asarray(coeffs, dtype=float)

    @classmethod
    def random(cls, rng: np.random.Generator, degree: int, scale: float = 1.0) -> "Poly2D":
        c = rng.standard_normal((degree + 1, degree + 1)) * scale
        i, j = np.indices(c.shape)
        c[i + j > degree] = 0.0
        return cls(c)

    def __call__(self, x, y):
        return P.polyval2d(x, y, self.c)

    def grad(self, x, y):
        return (P.polyval2d(x, y, P.polyder(self.c, axis=0)), P.polyval2d(x, y, P.polyder(self.c, axis=1)))


def square_mesh(n_triangles: int = 4) -> Mesh:
    if n_triangles == 4:
        return build_mesh(SQUARE4_V, SQUARE4_T)
    return build_mesh(SQUARE2_V, SQUARE2_T)


def random_mesh(rng: np.random.Generator, rounds: int = 2, jitter: float = 0.15) -> Mesh:
    """Randomly bisected criss-cross square with jittered interior vertices."""
    m = square_mesh(4)
    if rng.random() < 0.5:
        m = uniform_refine(m)
    for _ in range(rounds):
        marked = np.flatnonzero(rng.random(m.n_triangles) < 0.3)
        m = bisect(m, marked)
    v = m.vertices.copy()
    boundary = np.zeros(m.n_vertices, dtype=bool)
    boundary[m.edges[m.is_boundary].ravel()] = True
    h = m.edge_lengths.min()
    v[~boundary] += jitter * h * rng.uniform(-1, 1, size=((~boundary).sum(), 2))
    return build_mesh(v, m.triangles)


def rt_projection_of_gradient(space, poly: Poly2D) -> np.ndarray:
    """``Pi_RT grad v`` coefficients per cell in the space's orthonormal RT basis."""
    fr = space.frames(np.arange(space.mesh.n_triangles))
    x, w = fr.cell_points(space.quad_degree + 6)
    psi = VectorBasis(fr, space.p, rt=True).eval(x)
    g = np.stack(poly.grad(x[..., 0], x[..., 1]), axis=-1)
    return np.einsum("cq,cqkd,cqd->ck", w, psi, g)


def galerkin_projection_cells(space, poly: Poly2D) -> np.ndarray:
    """``G v`` coefficients per cell (energy projection with matched mean) in the cell basis."""
    fr = space.frames(np.arange(space.mesh.n_triangles))
    x, w = fr.cell_points(space.quad_degree + 6)
    phi, dphi = ScalarBasis(fr, space.p + 1).eval(x, grad=True)
    g = np.stack(poly.grad(x[..., 0], x[..., 1]), axis=-1)
    K = np.einsum("cq,cqid,cqjd->cij", w, dphi, dphi)
    rhs = np.einsum("cq,cqid,cqd->ci", w, dphi, g)
    out = np.zeros((space.mesh.n_triangles, space.n_cell))
    out[:, 0] = np.einsum("cq,cq,cq->c", w, phi[..., 0], poly(x[..., 0], x[..., 1]))
    if space.n_cell > 1:
        out[:, 1:] = np.linalg.solve(K[:, 1:, 1:], rhs[:, 1:, None])[..., 0]
    return out


def commutativity_errors(space, poly: Poly2D) -> tuple[float, float]:
    """Max over cells of ``||G I v - Pi_RT grad v||`` and ``||R I v - G v||`` (L2 norms)."""
    Iv = space.interpolate_local(poly, quad_degree=space.quad_degree + 6)
    GI = np.einsum("cij,cj->ci", space.ops.G, Iv)
    RI = np.einsum("cij,cj->ci", space.ops.R, Iv)
    e_g = np.linalg.norm(GI - rt_projection_of_gradient(space, poly), axis=1).max()
    e_r = np.linalg.norm(RI - galerkin_projection_cells(space, poly), axis=1).max()
    return float(e_g), float(e_r)


def sin_sin(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def full_pencil_finite_spectrum(sys: BlockSystem) -> np.ndarray:
    """Finite eigenvalues of the singular block pencil by QZ (dense oracle)."""
    A, B = sys.full_matrices()
    w = sla.eig(A.toarray(), B.toarray(), right=False, homogeneous_eigvals=True)
    alpha, beta = w
    finite = np.abs(beta) > 1e-10 * np.abs(alpha)
    return np.sort((alpha[finite] / beta[finite]).real)


def small_meshes():
    """Meshes and degrees with at most 60 cell unknowns."""
    out = []
    for p, meshes in {
        0: [square_mesh(4), uniform_refine(square_mesh(2)), bisect(square_mesh(4), [0, 1]), build_mesh(REF_TRIANGLE, [[0, 1, 2]])],
        1: [square_mesh(4), square_mesh(2), bisect(square_mesh(4), [2])],
        2: [square_mesh(4), square_mesh(2)],
        3: [square_mesh(4)],
        4: [square_mesh(2)],
    }.items():
        out += [(p, m) for m in meshes]
    return out
