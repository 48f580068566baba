"""Stabilization-free residual estimator, its hypotheses, and Doerfler marking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bases import ScalarBasis, VectorBasis
from .hho import HHOSpace, HHOVector


@dataclass
class Indicators:
    eta_sq: np.ndarray

    @property
    def total(self) -> float:
        return float(self.eta_sq.sum())


def compute_ph(space: HHOSpace, u: HHOVector) -> np.ndarray:
    """Coefficients of ``p_h = Pi_p G u_h`` in each cell's orthonormal ``P_p(T; R^2)`` basis."""
    return space.gradient_projection(u)


def _vector_values(space: HHOSpace, cells, x, derivatives=False):
    vb = VectorBasis(space.frames(cells), space.p, rt=True)
    out = vb.eval(x, derivatives=derivatives)
    n = space.n_pp
    if derivatives:
        vals, div, curl = out
        return vals[..., :n, :], div[..., :n], curl[..., :n]
    return out[..., :n, :]


def eval_ph(space: HHOSpace, ph: np.ndarray, cells: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Values of ``p_h`` at global points ``x`` of shape ``(len(cells), ..., 2)``."""
    return np.einsum("c...kd,ck->c...d", _vector_values(space, cells, x), ph[cells])


def _edge_traces(space: HHOSpace, ph: np.ndarray):
    """``p_h`` at the Gauss points of every edge from both sides, ``(ne, 2, ng, 2)``."""
    mesh = space.mesh
    deg = space.quad_degree
    traces = None
    for cells in space.chunks():
        fr = space.frames(cells)
        te = mesh.triangle_edges[cells]
        e = mesh.edges[te]
        xe, we, t = fr.edge_points(deg, mesh.vertices[e[..., 0]], mesh.vertices[e[..., 1]])
        vals = eval_ph(space, ph, cells, xe)
        if traces is None:
            traces = np.zeros((mesh.n_edges, 2, len(t), 2))
        side = (mesh.edge_triangles[te, 0] != cells[:, None]).astype(np.int64)
        traces[te.ravel(), side.ravel()] = vals.reshape(-1, len(t), 2)
    return traces


def estimate(space: HHOSpace, u: HHOVector, lambda_h: float, ph: np.ndarray | None = None) -> Indicators:
    """Local indicators ``eta^2(T)``.

    ``eta^2(T) = |T| (||div p_h + lambda_h u_T||^2 + ||curl p_h||^2)
    + |T|^{1/2} (sum over interior edges of T of ||[p_h . nu_F]||^2
    + sum over all edges of T of ||[p_h x nu_F]||^2)``, where the tangential
    jump on a boundary edge is the trace.  Interior edge jumps are computed
    once and added to both neighbours.
    """
    from .quadrature import quad_rule_interval

    mesh = space.mesh
    ph = compute_ph(space, u) if ph is None else ph
    area = mesh.areas
    volume = np.empty(mesh.n_triangles)
    for cells in space.chunks():
        fr = space.frames(cells)
        x, w = fr.cell_points(space.quad_degree)
        _, div, curl = _vector_values(space, cells, x, derivatives=True)
        uT = np.einsum("cqi,ci->cq", ScalarBasis(fr, space.p + 1).eval(x), u.cell_coeffs[cells])
        r = np.einsum("cqk,ck->cq", div, ph[cells]) + lambda_h * uT
        c = np.einsum("cqk,ck->cq", curl, ph[cells])
        volume[cells] = np.einsum("cq,cq->c", w, r ** 2 + c ** 2)

    traces = _edge_traces(space, ph)
    weights = quad_rule_interval(space.quad_degree).weights
    boundary = mesh.is_boundary
    jump = traces[:, 0] - np.where(boundary[:, None, None], 0.0, traces[:, 1])
    length = mesh.edge_lengths
    nj = np.einsum("fgd,fd->fg", jump, mesh.edge_normals)
    tj = np.einsum("fgd,fd->fg", jump, mesh.edge_tangents)
    normal_sq = np.where(boundary, 0.0, (nj ** 2) @ weights * length)
    tangential_sq = (tj ** 2) @ weights * length
    edge_term = (normal_sq + tangential_sq)[mesh.triangle_edges].sum(axis=1)
    return Indicators(area * volume + np.sqrt(area) * edge_term)


@dataclass
class HypothesisCheck:
    """Maximal violations of the discrete identities behind the estimator.

    ``a1``: max over interior-vertex hat functions ``v_C`` of
    ``|(p_h, grad v_C) - lambda_h (u_T, v_C)|``; ``a2``: max over all vertices
    of ``|(p_h, Curl v_C)|`` (divergence-free lowest-order Raviart-Thomas fields).
    """

    a1: float
    a2: float
    ph_norm: float

    @property
    def relative(self) -> tuple[float, float]:
        return self.a1 / self.ph_norm, self.a2 / self.ph_norm


def verify_A1_A2(space: HHOSpace, u: HHOVector, lambda_h: float, ph: np.ndarray | None = None) -> HypothesisCheck:
    mesh = space.mesh
    ph = compute_ph(space, u) if ph is None else ph
    v = mesh.vertices[mesh.triangles]
    area = mesh.areas
    # hat gradients: grad lambda_i = rot90(opposite edge) / (2|T|)
    d = v[:, [2, 0, 1]] - v[:, [1, 2, 0]]
    grads = np.stack([-d[..., 1], d[..., 0]], axis=-1) / (2.0 * area[:, None, None])
    integral_ph = np.empty((mesh.n_triangles, 2))
    u_hat = np.empty((mesh.n_triangles, 3))
    norm_sq = 0.0
    from .quadrature import quad_rule_triangle

    rule = quad_rule_triangle(space.quad_degree)
    lam = np.column_stack([1.0 - rule.points.sum(axis=1), rule.points])
    for cells in space.chunks():
        fr = space.frames(cells)
        x, w = fr.cell_points(space.quad_degree)
        vals = eval_ph(space, ph, cells, x)
        integral_ph[cells] = np.einsum("cq,cqd->cd", w, vals)
        norm_sq += float(np.einsum("cq,cqd,cqd->", w, vals, vals))
        uT = np.einsum("cqi,ci->cq", ScalarBasis(fr, space.p + 1).eval(x), u.cell_coeffs[cells])
        u_hat[cells] = np.einsum("cq,cq,qi->ci", w, uT, lam)
    a1_local = np.einsum("cid,cd->ci", grads, integral_ph) - lambda_h * u_hat
    curls = np.stack([grads[..., 1], -grads[..., 0]], axis=-1)
    a2_local = np.einsum("cid,cd->ci", curls, integral_ph)
    nv = mesh.n_vertices
    a1 = np.bincount(mesh.triangles.ravel(), a1_local.ravel(), minlength=nv)
    a2 = np.bincount(mesh.triangles.ravel(), a2_local.ravel(), minlength=nv)
    on_boundary = np.zeros(nv, dtype=bool)
    on_boundary[mesh.edges[mesh.is_boundary].ravel()] = True
    a1_max = float(np.abs(a1[~on_boundary]).max()) if (~on_boundary).any() else 0.0
    return HypothesisCheck(a1_max, float(np.abs(a2).max()), float(np.sqrt(norm_sq)))


def mark_doerfler(indicators, theta: float = 0.5) -> np.ndarray:
    """Minimal set of cells carrying a ``theta`` fraction of the total indicator.

    Cells are taken greedily by decreasing indicator, ties broken by index.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    eta = np.asarray(getattr(indicators, "eta_sq", indicators), dtype=float)
    if theta == 1.0:
        return np.flatnonzero(eta > 0)
    order = np.lexsort((np.arange(len(eta)), -eta))
    cumulative = np.cumsum(eta[order])
    k = int(np.searchsorted(cumulative, theta * cumulative[-1], side="left")) + 1
    return np.sort(order[: min(k, len(eta))])
