import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from helpers import REF_TRIANGLE, full_pencil_finite_spectrum, random_mesh, small_meshes, square_mesh
from hypothesis import given, settings
from hypothesis import strategies as st

from hhoglb.assembly import BlockSystem, EigenSolverError, assemble, condense, glb_check, glb_condition, solve_evp
from hhoglb.hho import HHOSpace, Params
from hhoglb.mesh import bisect, build_mesh, uniform_refine

DEFAULT_PARAMS = Params()


def test_single_triangle_p0_blocks():
    sys = assemble(build_mesh(REF_TRIANGLE, [[0, 1, 2]]), 0)
    assert sys.N == 3
    assert sys.A_FF.shape == (0, 0)
    A_s, B = condense(sys)
    np.testing.assert_allclose(A_s, sys.A_TT.toarray())


def test_criss_cross_square_p0():
    sys = assemble(square_mesh(4), 0)
    assert sys.N == 4 * 3
    A, _ = sys.full_matrices()
    A = A.toarray()
    np.testing.assert_allclose(A, A.T, atol=1e-13 * np.abs(A).max())
    np.testing.assert_allclose(sys.A_FT.toarray(), sys.A_TF.toarray().T)


@pytest.mark.parametrize("p", range(4))
def test_block_dimensions_and_definiteness(p):
    m = uniform_refine(square_mesh(4))
    sys = assemble(m, p)
    assert sys.N == m.n_triangles * (p + 2) * (p + 3) // 2
    assert sys.n_face_dofs == len(m.interior_edges) * (p + 1)
    assert np.linalg.eigvalsh(sys.A_FF.toarray()).min() > 0
    np.testing.assert_allclose(sys.B_TT.toarray(), np.eye(sys.N), atol=1e-14)
    # a_h is a scalar product on V_h
    A, _ = sys.full_matrices()
    assert np.linalg.eigvalsh(A.toarray()).min() > 0


def test_assembled_form_is_sum_of_local_values():
    rng = np.random.default_rng(0)
    m = random_mesh(rng)
    space = HHOSpace(m, 2)
    sys = assemble(m, 2, space=space)
    A, _ = sys.full_matrices()
    v = space.from_array(rng.standard_normal(space.ndof))
    loc = space.gather(v)
    A_loc, _ = space.local_forms(Params())
    x = v.to_array()
    assert x @ (A @ x) == pytest.approx(np.einsum("ci,cij,cj->", loc, A_loc, loc), rel=1e-12)


@pytest.mark.parametrize("p, mesh", small_meshes())
def test_condensed_spectrum_equals_full_pencil(p, mesh):
    sys = assemble(mesh, p)
    assert sys.N <= 60
    A_s, B = condense(sys)
    np.testing.assert_allclose(A_s, A_s.T, atol=1e-11 * np.abs(A_s).max())
    cond = sla.eigh(A_s, B, eigvals_only=True)
    full = full_pencil_finite_spectrum(sys)
    assert len(full) == sys.N
    np.testing.assert_allclose(cond, full, rtol=1e-9)


def test_schur_complement_decreases_quadratic_form():
    rng = np.random.default_rng(2)
    sys = assemble(uniform_refine(square_mesh(4)), 1)
    A_s, _ = condense(sys)
    A_tt = sys.A_TT.toarray()
    for _ in range(20):
        x = rng.standard_normal(sys.N)
        assert x @ A_s @ x <= x @ A_tt @ x + 1e-12


def test_one_by_one_system():
    space = HHOSpace(build_mesh(REF_TRIANGLE, [[0, 1, 2]]), 0)
    a, b = 3.0, 0.75
    z = sp.csr_matrix((1, 0))
    sys = BlockSystem(sp.csr_matrix([[a]]), z, z.T.tocsr(), sp.csr_matrix((0, 0)), sp.csr_matrix([[b]]), space, Params())
    res = solve_evp(sys, 1)
    assert res.eigenvalues[0] == pytest.approx(a / b, rel=1e-14)


def test_solve_matches_dense_oracle_and_residual_contract():
    m = bisect(uniform_refine(square_mesh(4)), [0, 3])
    sys = assemble(m, 1)
    A_s, B = condense(sys)
    oracle = sla.eigh(A_s, B, eigvals_only=True)[:5]
    for method in ("dense", "sparse"):
        res = solve_evp(sys, 5, method=method)
        np.testing.assert_allclose(res.eigenvalues, oracle, rtol=1e-9)
        assert np.all(res.residuals <= 1e-9 * max(1.0, oracle.max()))
        assert np.all(np.diff(res.eigenvalues) >= 0)
        # B-orthonormal cell components with positive largest coefficient
        X = res.cell_vectors
        np.testing.assert_allclose(X.T @ (sys.B_TT @ X), np.eye(5), atol=1e-9)
        big = X[np.argmax(np.abs(X), axis=0), np.arange(5)]
        assert np.all(big > 0)
        # face unknowns recovered from x_F = -A_FF^{-1} A_FT x_T
        xf = -np.linalg.solve(sys.A_FF.toarray(), sys.A_FT @ X)
        np.testing.assert_allclose(res.face_vectors, xf, atol=1e-10)


def test_j_max_validation():
    sys = assemble(build_mesh(REF_TRIANGLE, [[0, 1, 2]]), 0)
    with pytest.raises(ValueError):
        solve_evp(sys, 4)
    with pytest.raises(ValueError):
        solve_evp(sys, 0)
    with pytest.raises(ValueError):
        solve_evp(sys, 1, method="magic")


def test_unit_square_p1_lower_bound():
    m = uniform_refine(uniform_refine(square_mesh(4)))
    res = solve_evp(assemble(m, 1), 1)
    entry = glb_check(res, m.h_max, DEFAULT_PARAMS)[1]
    assert entry.condition_met
    assert entry.glb <= 2 * math.pi**2


def test_eigenvalues_invariant_under_renumbering():
    rng = np.random.default_rng(4)
    m = random_mesh(rng, jitter=0.0)
    perm_v = rng.permutation(m.n_vertices)
    inv = np.argsort(perm_v)
    tri = inv[m.triangles][rng.permutation(m.n_triangles)]
    tri = np.array([np.roll(t, rng.integers(3)) for t in tri])
    m2 = build_mesh(m.vertices[perm_v], tri)
    for p in (0, 2):
        lam1 = solve_evp(assemble(m, p), 6).eigenvalues
        lam2 = solve_evp(assemble(m2, p), 6).eigenvalues
        np.testing.assert_allclose(lam2, lam1, rtol=1e-10)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), frac=st.floats(0.05, 0.95))
def test_eigenvalues_nondecreasing_in_beta(seed, frac):
    rng = np.random.default_rng(seed)
    m = random_mesh(rng, rounds=1)
    base = Params()
    small = Params(beta=frac * base.beta)
    lam_small = solve_evp(assemble(m, 1, small), 4).eigenvalues
    lam_big = solve_evp(assemble(m, 1, base), 4).eigenvalues
    assert np.all(lam_big >= lam_small * (1 - 1e-12))


def test_clusters_on_symmetric_square():
    m = uniform_refine(square_mesh(4))
    res = solve_evp(assemble(m, 1), 3)
    groups = res.clusters()
    assert [0] in groups and [1, 2] in groups


# -- certificate ---------------------------------------------------------------------


def test_beta_sigma_product_is_alpha():
    prm = Params()
    assert prm.beta * prm.sigma2_sq == pytest.approx(0.5, rel=1e-14)
    # the condition reduces to h^2 lambda <= alpha pi^2
    assert glb_condition(4.934802 * 0.999, 1.0, prm)
    assert not glb_condition(4.934802 * 1.001, 1.0, prm)


def test_glb_zero_eigenvalue_and_failure():
    rep = glb_check([0.0, 10.0], 1.0, DEFAULT_PARAMS)
    assert rep[1].condition_met and rep[1].glb == 0.0
    assert 10 / math.pi**2 == pytest.approx(1.013, abs=1e-3)
    assert not rep[2].condition_met and rep[2].glb == 0.0


@settings(max_examples=50, deadline=None)
@given(lam=st.floats(0, 1e4), h=st.floats(1e-3, 2.0))
def test_glb_never_exceeds_lambda(lam, h):
    e = glb_check([lam], h, DEFAULT_PARAMS)[1]
    assert e.glb <= e.lambda_h
    assert (e.glb == 0.0) == (not e.condition_met) or lam == 0.0


def test_nonpositive_pencil_rejected():
    space = HHOSpace(build_mesh(REF_TRIANGLE, [[0, 1, 2]]), 0)
    z = sp.csr_matrix((1, 0))
    sys = BlockSystem(sp.csr_matrix([[-1.0]]), z, z.T.tocsr(), sp.csr_matrix((0, 0)), sp.csr_matrix([[1.0]]), space, Params())
    with pytest.raises(EigenSolverError):
        solve_evp(sys, 1)
