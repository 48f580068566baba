"""Local hybrid high-order operators on a triangulation.

Local degrees of freedom of a cell are ordered as the ``dim P_{p+1}`` cell
coefficients (orthonormal basis) followed by ``p + 1`` coefficients for each
of the three local edges (edge ``i`` opposite vertex ``i``), expressed in the
orthonormal Legendre basis of the *global* edge parametrisation.  Boundary
edges carry no global unknowns; their local coefficients are zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bases import CellFrames, ScalarBasis, VectorBasis, dim_p, face_basis
from .mesh import Mesh
from .quadrature import quad_rule_interval

DEFAULT_ALPHA = 0.5
DEFAULT_C_P = 1.0 / (math.sqrt(2.0) * math.pi)
DEFAULT_C_ST2 = math.sqrt(2.0)

_CHUNK_FLOATS = 2_000_000


@dataclass(frozen=True)
class Params:
    """Method parameters.  ``beta`` defaults to ``alpha / sigma2_sq``."""

    alpha: float = DEFAULT_ALPHA
    beta: float | None = None
    c_p: float = DEFAULT_C_P
    c_st2: float = DEFAULT_C_ST2

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.c_p <= 0 or self.c_st2 <= 0:
            raise ValueError("Poincare and stability constants must be positive")
        if self.beta is None:
            object.__setattr__(self, "beta", self.alpha / self.sigma2_sq)
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        # beta = alpha / sigma2^2 may overshoot alpha by an ulp after the product
        if self.beta * self.sigma2_sq > self.alpha * (1.0 + 1e-12):
            raise ValueError(
                f"beta * sigma2^2 = {self.beta * self.sigma2_sq:.6g} exceeds alpha = {self.alpha}"
            )

    @property
    def sigma2_sq(self) -> float:
        return self.c_p ** 2 * self.c_st2 ** 2


@dataclass
class HHOVector:
    """Cell coefficients ``(n_cells, dim P_{p+1})`` and interior-edge coefficients ``(n_int, p+1)``."""

    cell_coeffs: np.ndarray
    face_coeffs: np.ndarray

    def __add__(self, other: "HHOVector") -> "HHOVector":
        return HHOVector(self.cell_coeffs + other.cell_coeffs, self.face_coeffs + other.face_coeffs)

    def __mul__(self, a: float) -> "HHOVector":
        return HHOVector(a * self.cell_coeffs, a * self.face_coeffs)

    __rmul__ = __mul__

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.cell_coeffs.ravel(), self.face_coeffs.ravel()])


@dataclass
class LocalOperators:
    """Stacked per-cell matrices acting on local dof vectors.

    ``R``: local dofs -> ``P_{p+1}`` coefficients of the potential reconstruction,
    ``G``: local dofs -> ``RT_p`` coefficients of the gradient reconstruction,
    ``S``: local dofs -> ``P_{p+1}`` coefficients of ``v_T - R v_h``.
    """

    R: np.ndarray
    G: np.ndarray
    S: np.ndarray
    n_pp: int = field(default=0)


def _edge_geometry(mesh: Mesh, cells: np.ndarray):
    te = mesh.triangle_edges[cells]
    e = mesh.edges[te]
    return mesh.vertices[e[..., 0]], mesh.vertices[e[..., 1]], mesh.edge_lengths[te]


class HHOSpace:
    """Discrete space ``V_h = P_{p+1}(T) x P_p(F(Omega))`` with its local operators."""

    def __init__(self, mesh: Mesh, p: int):
        if not 0 <= p <= 6:
            raise ValueError(f"polynomial degree must lie in 0..6, got {p}")
        self.mesh = mesh
        self.p = p
        self.n_cell = dim_p(p + 1)
        self.n_face = p + 1
        self.n_local = self.n_cell + 3 * self.n_face
        self.n_rt = (p + 1) * (p + 3)
        self.n_pp = (p + 1) * (p + 2)
        self.quad_degree = 2 * (p + 2) + 2

        interior = mesh.interior_edges
        self.face_index = np.full(mesh.n_edges, -1, dtype=np.int64)
        self.face_index[interior] = np.arange(len(interior))
        self.n_interior = len(interior)
        self.N = mesh.n_triangles * self.n_cell
        self.ndof = self.N + self.n_interior * self.n_face

        self.local_dofs = self._local_dof_map()
        self.ops = self._build_operators()

    # -- layout ------------------------------------------------------------
    def _local_dof_map(self) -> np.ndarray:
        """Global index of each local dof, ``-1`` for boundary-edge dofs."""
        nt = self.mesh.n_triangles
        cell = np.arange(nt)[:, None] * self.n_cell + np.arange(self.n_cell)[None, :]
        fi = self.face_index[self.mesh.triangle_edges]
        face = self.N + fi[:, :, None] * self.n_face + np.arange(self.n_face)[None, None, :]
        face = np.where(fi[:, :, None] >= 0, face, -1).reshape(nt, -1)
        return np.hstack([cell, face])

    def chunks(self, per_cell_floats: int | None = None):
        """Cell index blocks sized to bound the memory of batched evaluations."""
        nq = len(quad_rule_interval(self.quad_degree)) ** 2
        per_cell = per_cell_floats or nq * (self.n_rt * 2 + self.n_cell * 3) * 3
        size = max(64, _CHUNK_FLOATS // per_cell)
        nt = self.mesh.n_triangles
        for start in range(0, nt, size):
            yield np.arange(start, min(nt, start + size))

    def frames(self, cells: np.ndarray) -> CellFrames:
        return CellFrames.from_vertices(self.mesh.vertices[self.mesh.triangles[cells]])

    # -- operators ---------------------------------------------------------
    def _build_operators(self) -> LocalOperators:
        nt = self.mesh.n_triangles
        R = np.empty((nt, self.n_cell, self.n_local))
        G = np.empty((nt, self.n_rt, self.n_local))
        for cells in self.chunks():
            R[cells], G[cells] = self._chunk_operators(cells)
        S = -R
        S[:, :, : self.n_cell] += np.eye(self.n_cell)
        return LocalOperators(R, G, S, self.n_pp)

    def _chunk_operators(self, cells: np.ndarray):
        p, nT, nF = self.p, self.n_cell, self.n_face
        fr = self.frames(cells)
        cb = ScalarBasis(fr, p + 1)
        vb = VectorBasis(fr, p, rt=True)
        xq, wq = fr.cell_points(self.quad_degree)
        _, dphi = cb.eval(xq, grad=True)
        psi = vb.eval(xq)
        starts, ends, lengths = _edge_geometry(self.mesh, cells)
        xe, we, t = fr.edge_points(self.quad_degree, starts, ends)
        normals = fr.outward_normals()
        phie, dphie = cb.eval(xe, grad=True)
        psie_n = np.einsum("ceqkd,ced->ceqk", vb.eval(xe), normals)
        dphie_n = np.einsum("ceqid,ced->ceqi", dphie, normals)
        chi = face_basis(t, p, lengths)

        nc = len(cells)
        G = np.zeros((nc, self.n_rt, self.n_local))
        G[:, :, :nT] = np.einsum("cq,cqid,cqkd->cki", wq, dphi, psi)
        G[:, :, :nT] -= np.einsum("ceq,ceqi,ceqk->cki", we, phie, psie_n)
        G[:, :, nT:] = np.einsum("ceq,ceql,ceqk->ckel", we, chi, psie_n).reshape(nc, self.n_rt, 3 * nF)

        K = np.einsum("cq,cqid,cqjd->cij", wq, dphi, dphi)
        rhs = np.zeros((nc, nT, self.n_local))
        rhs[:, :, :nT] = K - np.einsum("ceq,ceqi,ceqj->cji", we, phie, dphie_n)
        rhs[:, :, nT:] = np.einsum("ceq,ceql,ceqj->cjel", we, chi, dphie_n).reshape(nc, nT, 3 * nF)
        R = np.zeros((nc, nT, self.n_local))
        # phi_0 is constant and phi_1.. have zero mean: the mean constraint fixes R[0]
        R[:, 0, 0] = 1.0
        R[:, 1:, :] = np.linalg.solve(K[:, 1:, 1:], rhs[:, 1:, :])
        return R, G

    def local_forms(self, params: Params) -> tuple[np.ndarray, np.ndarray]:
        """Stacked local stiffness ``A_T`` and mass ``B_T`` matrices ``(n_cells, n_local, n_local)``."""
        G, S = self.ops.G, self.ops.S
        Gp = G[:, : self.n_pp, :]
        h2 = self.mesh.diameters ** 2
        A = (1.0 - params.alpha) * np.einsum("cki,ckj->cij", G, G)
        A += params.alpha * np.einsum("cki,ckj->cij", Gp, Gp)
        A += (params.beta / h2)[:, None, None] * np.einsum("cki,ckj->cij", S, S)
        A = 0.5 * (A + A.transpose(0, 2, 1))
        B = np.zeros_like(A)
        B[:, : self.n_cell, : self.n_cell] = np.eye(self.n_cell)
        return A, B

    def local_forms_difference_form(self, params: Params) -> np.ndarray:
        """``A_T`` written as ``(Gu, Gv) - alpha((1-Pi_p)Gu, (1-Pi_p)Gv) + beta h^-2 (Su, Sv)``."""
        G, S = self.ops.G, self.ops.S
        Gq = G.copy()
        Gq[:, : self.n_pp, :] = 0.0
        h2 = self.mesh.diameters ** 2
        return (
            np.einsum("cki,ckj->cij", G, G)
            - params.alpha * np.einsum("cki,ckj->cij", Gq, Gq)
            + (params.beta / h2)[:, None, None] * np.einsum("cki,ckj->cij", S, S)
        )

    # -- vectors -----------------------------------------------------------
    def zero(self) -> HHOVector:
        return HHOVector(np.zeros((self.mesh.n_triangles, self.n_cell)), np.zeros((self.n_interior, self.n_face)))

    def from_array(self, x: np.ndarray) -> HHOVector:
        x = np.asarray(x, dtype=float)
        return HHOVector(x[: self.N].reshape(-1, self.n_cell).copy(), x[self.N:].reshape(-1, self.n_face).copy())

    def gather(self, v: HHOVector) -> np.ndarray:
        """Local dof vectors ``(n_cells, n_local)``, zero on boundary edges."""
        x = np.concatenate([v.to_array(), [0.0]])
        idx = np.where(self.local_dofs >= 0, self.local_dofs, len(x) - 1)
        return x[idx]

    def reconstruct_potential(self, v: HHOVector) -> np.ndarray:
        return np.einsum("cij,cj->ci", self.ops.R, self.gather(v))

    def reconstruct_gradient(self, v: HHOVector) -> np.ndarray:
        return np.einsum("cij,cj->ci", self.ops.G, self.gather(v))

    def stabilisation(self, v: HHOVector) -> np.ndarray:
        return np.einsum("cij,cj->ci", self.ops.S, self.gather(v))

    def gradient_projection(self, v: HHOVector) -> np.ndarray:
        """Coefficients of ``p_h = Pi_p G v_h`` in the leading ``P_p(T; R^2)`` basis."""
        return self.reconstruct_gradient(v)[:, : self.n_pp]

    def interpolate(self, f, quad_degree: int | None = None) -> HHOVector:
        """HHO interpolation ``I v = (Pi_{p+1} v, Pi_F^p v)`` of a callable ``f(x, y)``."""
        deg = quad_degree if quad_degree is not None else self.quad_degree + 4
        cell = self._cell_moments(f, deg)
        return HHOVector(cell, self._edge_moments(f, deg)[self.mesh.interior_edges])

    def _cell_moments(self, f, deg: int) -> np.ndarray:
        cell = np.empty((self.mesh.n_triangles, self.n_cell))
        for cells in self.chunks():
            fr = self.frames(cells)
            x, w = fr.cell_points(deg)
            phi = ScalarBasis(fr, self.p + 1).eval(x)
            cell[cells] = np.einsum("cq,cqi,cq->ci", w, phi, np.asarray(f(x[..., 0], x[..., 1]), dtype=float))
        return cell

    def _edge_moments(self, f, deg: int) -> np.ndarray:
        """``Pi_F^p f`` coefficients on every edge, boundary edges included."""
        m = self.mesh
        a, b = m.vertices[m.edges[:, 0]], m.vertices[m.edges[:, 1]]
        rule = quad_rule_interval(deg)
        x = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
        length = m.edge_lengths
        chi = face_basis(rule.points, self.p, length)
        vals = np.asarray(f(x[..., 0], x[..., 1]), dtype=float)
        return np.einsum("q,fql,fq->fl", rule.weights, chi, vals) * length[:, None]

    def interpolate_local(self, f, quad_degree: int | None = None) -> np.ndarray:
        """Local interpolation vectors ``(n_cells, n_local)`` with boundary-edge moments kept.

        Unlike :meth:`interpolate` this does not impose zero boundary values,
        so local identities can be checked for arbitrary polynomials.
        """
        deg = quad_degree if quad_degree is not None else self.quad_degree + 4
        cell = self._cell_moments(f, deg)
        face = self._edge_moments(f, deg)[self.mesh.triangle_edges]
        return np.hstack([cell, face.reshape(self.mesh.n_triangles, -1)])


def _single_cell_space(vertices, p: int) -> HHOSpace:
    from .mesh import build_mesh

    return HHOSpace(build_mesh(np.asarray(vertices, dtype=float), [[0, 1, 2]]), p)


def potential_reconstruction_local(vertices, p: int) -> np.ndarray:
    """Matrix ``R_T`` of one triangle (local dofs -> ``P_{p+1}`` coefficients)."""
    return _single_cell_space(vertices, p).ops.R[0]


def gradient_reconstruction_local(vertices, p: int) -> np.ndarray:
    """Matrix ``G_T`` of one triangle (local dofs -> ``RT_p`` coefficients)."""
    return _single_cell_space(vertices, p).ops.G[0]


def local_forms(vertices, p: int, params: Params | None = None) -> tuple[np.ndarray, np.ndarray]:
    A, B = _single_cell_space(vertices, p).local_forms(params or Params())
    return A[0], B[0]
