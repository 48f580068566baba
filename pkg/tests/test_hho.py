import math

import numpy as np
import pytest
from helpers import REF_TRIANGLE, Poly2D, commutativity_errors, random_mesh, sin_sin, square_mesh
from hypothesis import given, settings
from hypothesis import strategies as st

from hhoglb.bases import CellFrames, ScalarBasis, VectorBasis, dim_p
from hhoglb.hho import HHOSpace, HHOVector, Params, gradient_reconstruction_local, local_forms, potential_reconstruction_local
from hhoglb.mesh import build_mesh, uniform_refine
from hhoglb.quadrature import quad_rule_interval


def single(vertices, p):
    return HHOSpace(build_mesh(vertices, [[0, 1, 2]]), p)


# -- parameters -------------------------------------------------------------------


def test_default_parameters():
    prm = Params()
    assert prm.alpha == 0.5
    assert prm.sigma2_sq == pytest.approx(1 / math.pi**2, rel=1e-15)
    assert round(prm.sigma2_sq, 6) == 0.101321
    assert round(prm.beta, 6) == 4.934802


@pytest.mark.parametrize("kw", [{"alpha": 0.0}, {"alpha": 1.0}, {"beta": 10.0}, {"c_p": -1.0}, {"beta": -1.0}])
def test_invalid_parameters(kw):
    with pytest.raises(ValueError):
        Params(**kw)


# -- interpolation ------------------------------------------------------------------


def test_interpolation_of_global_polynomial():
    """A P_{p+1} function with zero trace is reproduced by the cell part."""
    p = 3
    m = uniform_refine(square_mesh(4))
    space = HHOSpace(m, p)
    f = lambda x, y: x * (1 - x) * y * (1 - y)  # noqa: E731
    Iv = space.interpolate(f)
    frames = space.frames(np.arange(m.n_triangles))
    x, _ = frames.cell_points(4)
    vals = np.einsum("cqi,ci->cq", ScalarBasis(frames, p + 1).eval(x), Iv.cell_coeffs)
    np.testing.assert_allclose(vals, f(x[..., 0], x[..., 1]), atol=1e-12)


def test_interpolation_face_means_p0():
    m = uniform_refine(square_mesh(4))
    space = HHOSpace(m, 0)
    Iv = space.interpolate(sin_sin)
    rule = quad_rule_interval(30)
    e = m.edges[m.interior_edges]
    a, b = m.vertices[e[:, 0]], m.vertices[e[:, 1]]
    x = a[:, None] + rule.points[None, :, None] * (b - a)[:, None]
    means = np.einsum("q,fq->f", rule.weights, sin_sin(x[..., 0], x[..., 1]))
    length = m.edge_lengths[m.interior_edges]
    # orthonormal constant on F is 1/sqrt(|F|)
    np.testing.assert_allclose(Iv.face_coeffs[:, 0] / np.sqrt(length), means, atol=1e-12)


def test_interpolation_linear():
    rng = np.random.default_rng(1)
    space = HHOSpace(random_mesh(rng), 2)
    f, g = Poly2D.random(rng, 4), Poly2D.random(rng, 5)
    a, b = 1.7, -0.4
    lhs = space.interpolate(lambda x, y: a * f(x, y) + b * g(x, y)).to_array()
    rhs = (a * space.interpolate(f) + b * space.interpolate(g)).to_array()
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


# -- reconstructions ----------------------------------------------------------------


def _constant_dofs(space, c):
    # interpolate the constant including boundary edges
    return space.interpolate_local(lambda x, y: c + 0 * x)


@pytest.mark.parametrize("p", range(4))
def test_reconstruction_of_affine(p):
    rng = np.random.default_rng(p)
    space = single(REF_TRIANGLE + rng.uniform(-0.1, 0.1, (3, 2)), p)
    affine = Poly2D(np.array([[0.3, -1.2], [2.1, 0.0]]))
    Iv = space.interpolate_local(affine)
    R = np.einsum("cij,cj->ci", space.ops.R, Iv)
    np.testing.assert_allclose(R, Iv[:, : space.n_cell], atol=1e-12)
    np.testing.assert_allclose(np.einsum("cij,cj->ci", space.ops.S, Iv), 0.0, atol=1e-12)


@pytest.mark.parametrize("p", range(4))
def test_constant_dofs(p):
    space = single(REF_TRIANGLE, p)
    c = _constant_dofs(space, 2.5)
    R = np.einsum("cij,cj->ci", space.ops.R, c)
    np.testing.assert_allclose(R, c[:, : space.n_cell], atol=1e-12)
    np.testing.assert_allclose(np.einsum("cij,cj->ci", space.ops.G, c), 0.0, atol=1e-12)


def test_potential_of_x3y_is_galerkin_projection():
    from helpers import galerkin_projection_cells

    f = Poly2D(np.array([[0, 0], [0, 0], [0, 0], [0, 1.0]]))
    for p in range(3):
        space = single(REF_TRIANGLE, p)
        R = np.einsum("cij,cj->ci", space.ops.R, space.interpolate_local(f))
        np.testing.assert_allclose(R, galerkin_projection_cells(space, f), atol=1e-10)


def test_gradient_of_x2y2_is_rt_projection():
    from helpers import rt_projection_of_gradient

    f = Poly2D(np.array([[0, 0, 0], [0, 0, 0], [0, 0, 1.0]]))
    for p in range(3):
        space = single(REF_TRIANGLE, p)
        G = np.einsum("cij,cj->ci", space.ops.G, space.interpolate_local(f))
        np.testing.assert_allclose(G, rt_projection_of_gradient(space, f), atol=1e-10)


@pytest.mark.parametrize("p", range(4))
def test_gradient_with_zero_faces_is_minus_divergence_pairing(p):
    """With zero face dofs, (G v, phi) = -(v_T, div phi) + (v_T, phi.n)_{dT}; for a bubble v_T the trace vanishes."""
    space = single(REF_TRIANGLE, p)
    fr = space.frames(np.array([0]))
    # bubble x y (1 - x - y) times a random P_{p-2} factor, projected onto P_{p+1}
    rng = np.random.default_rng(p)
    q = Poly2D.random(rng, max(p - 2, 0))
    bubble = lambda x, y: x * y * (1 - x - y) * q(x, y)  # noqa: E731
    if p + 1 < 3:
        bubble = lambda x, y: 0 * x  # noqa: E731
    Iv = space.interpolate_local(bubble)
    Iv[:, space.n_cell:] = 0.0
    G = np.einsum("cij,cj->ci", space.ops.G, Iv)[0]
    x, w = fr.cell_points(2 * p + 8)
    _, div, _ = VectorBasis(fr, p).eval(x, derivatives=True)
    oracle = -np.einsum("q,qk,q->k", w[0], div[0], bubble(x[0, :, 0], x[0, :, 1]))
    np.testing.assert_allclose(G, oracle, atol=1e-12)


def test_gradient_minus_grad_potential_orthogonal_to_gradients():
    rng = np.random.default_rng(5)
    for p in range(4):
        space = HHOSpace(random_mesh(rng, rounds=1), p)
        v = rng.standard_normal((space.mesh.n_triangles, space.n_local))
        Gv = np.einsum("cij,cj->ci", space.ops.G, v)
        Rv = np.einsum("cij,cj->ci", space.ops.R, v)
        fr = space.frames(np.arange(space.mesh.n_triangles))
        x, w = fr.cell_points(2 * p + 4)
        psi = VectorBasis(fr, p).eval(x)
        _, dphi = ScalarBasis(fr, p + 1).eval(x, grad=True)
        diff = np.einsum("cqkd,ck->cqd", psi, Gv) - np.einsum("cqkd,ck->cqd", dphi, Rv)
        inner = np.einsum("cq,cqd,cqid->ci", w, diff, dphi)
        np.testing.assert_allclose(inner, 0.0, atol=1e-10)


def test_local_matrix_functions():
    R = potential_reconstruction_local(REF_TRIANGLE, 1)
    G = gradient_reconstruction_local(REF_TRIANGLE, 1)
    assert R.shape == (dim_p(2), dim_p(2) + 3 * 2)
    assert G.shape == (8, dim_p(2) + 3 * 2)


# -- local forms ---------------------------------------------------------------------


@pytest.mark.parametrize("p", range(4))
def test_local_form_on_affine_is_dirichlet_energy(p):
    rng = np.random.default_rng(70 + p)
    space = HHOSpace(random_mesh(rng, rounds=1), p)
    grad = np.array([0.7, -1.3])
    Iv = space.interpolate_local(lambda x, y: grad[0] * x + grad[1] * y + 0.25)
    A, _ = space.local_forms(Params())
    vals = np.einsum("ci,cij,cj->c", Iv, A, Iv)
    np.testing.assert_allclose(vals, grad @ grad * space.mesh.areas, rtol=1e-12)


def test_local_form_zero_and_symmetry():
    rng = np.random.default_rng(8)
    T = REF_TRIANGLE + rng.uniform(-0.2, 0.2, (3, 2))
    for p in range(5):
        A, B = local_forms(T, p, Params())
        assert np.all(A @ np.zeros(len(A)) == 0)
        np.testing.assert_allclose(A, A.T, atol=1e-13 * np.abs(A).max())
        assert np.linalg.eigvalsh(A).min() > -1e-10 * np.abs(A).max()
        n = dim_p(p + 1)
        np.testing.assert_allclose(B[:n, :n], np.eye(n), atol=1e-14)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.integers(0, 4), alpha=st.floats(0.05, 0.95))
def test_two_forms_of_a_h_agree(seed, p, alpha):
    rng = np.random.default_rng(seed)
    space = HHOSpace(random_mesh(rng, rounds=1), p)
    prm = Params(alpha=alpha)
    A, _ = space.local_forms(prm)
    A2 = space.local_forms_difference_form(prm)
    v = rng.standard_normal((space.mesh.n_triangles, space.n_local))
    lhs = np.einsum("ci,cij,cj->c", v, A, v)
    rhs = np.einsum("ci,cij,cj->c", v, A2, v)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(lhs).max())


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.integers(0, 3), angle=st.floats(0, 2 * np.pi))
def test_local_matrices_rigid_motion_invariant(seed, p, angle):
    rng = np.random.default_rng(seed)
    T = REF_TRIANGLE + rng.uniform(-0.2, 0.2, (3, 2))
    c, s = np.cos(angle), np.sin(angle)
    Q = np.array([[c, -s], [s, c]])
    moved = T @ Q.T + rng.uniform(-5, 5, 2)
    A, _ = local_forms(T, p)
    A2, _ = local_forms(moved, p)
    np.testing.assert_allclose(A2, A, atol=1e-12 * np.abs(A).max())


# -- commutativity ----------------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.integers(0, 3))
def test_commutativity_property(seed, p):
    rng = np.random.default_rng(seed)
    space = HHOSpace(random_mesh(rng, rounds=1), p)
    e_g, e_r = commutativity_errors(space, Poly2D.random(rng, p + 3))
    assert e_g <= 1e-9 and e_r <= 1e-9


def test_hho_vector_roundtrip():
    space = HHOSpace(square_mesh(4), 1)
    x = np.arange(space.ndof, dtype=float)
    v = space.from_array(x)
    assert isinstance(v, HHOVector)
    np.testing.assert_array_equal(v.to_array(), x)
    assert space.zero().to_array().sum() == 0
    loc = space.gather(v)
    # boundary-edge slots carry zeros
    assert loc.shape == (4, space.n_local)
    frames = CellFrames.from_vertices(space.mesh.vertices[space.mesh.triangles])
    assert len(frames) == 4
