"""Global assembly, static condensation and the discrete eigenvalue problem."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hho import HHOSpace, HHOVector, Params
from .mesh import Mesh

log = logging.getLogger(__name__)

DENSE_LIMIT = 1500
RESIDUAL_TOL = 1e-9


class EigenSolverError(RuntimeError):
    pass


@dataclass
class BlockSystem:
    """Blocks of the symmetric pencil, cell unknowns first.

    ``B_TT`` is the cell mass matrix; with orthonormal cell bases it is the
    identity, but it is kept as a matrix so nothing downstream relies on that.
    """

    A_TT: sp.csr_matrix
    A_TF: sp.csr_matrix
    A_FT: sp.csr_matrix
    A_FF: sp.csr_matrix
    B_TT: sp.csr_matrix
    space: HHOSpace = field(repr=False)
    params: Params = field(repr=False)

    @property
    def N(self) -> int:
        return self.A_TT.shape[0]

    @property
    def n_face_dofs(self) -> int:
        return self.A_FF.shape[0]

    def full_matrices(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        A = sp.bmat([[self.A_TT, self.A_TF], [self.A_FT, self.A_FF]], format="csr")
        B = sp.block_diag([self.B_TT, sp.csr_matrix((self.n_face_dofs, self.n_face_dofs))], format="csr")
        return A, B


def assemble(mesh: Mesh, p: int, params: Params | None = None, space: HHOSpace | None = None) -> BlockSystem:
    """Assemble ``a_h`` and ``b_h``; boundary-edge unknowns are dropped (zero Dirichlet data)."""
    params = params or Params()
    space = space or HHOSpace(mesh, p)
    A_loc, B_loc = space.local_forms(params)
    dofs = space.local_dofs
    n = space.ndof
    rows = np.broadcast_to(dofs[:, :, None], A_loc.shape)
    cols = np.broadcast_to(dofs[:, None, :], A_loc.shape)
    keep = (rows >= 0) & (cols >= 0)
    A = sp.coo_matrix((A_loc[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    nT = space.n_cell
    B_blocks = B_loc[:, :nT, :nT]
    cr = np.broadcast_to(dofs[:, :nT, None], B_blocks.shape)
    cc = np.broadcast_to(dofs[:, None, :nT], B_blocks.shape)
    B = sp.coo_matrix((B_blocks.ravel(), (cr.ravel(), cc.ravel())), shape=(space.N, space.N)).tocsr()
    N = space.N
    return BlockSystem(A[:N, :N], A[:N, N:], A[N:, :N], A[N:, N:], B, space, params)


def condense(sys: BlockSystem) -> tuple[np.ndarray, np.ndarray]:
    """Dense Schur complement ``A_TT - A_TF A_FF^{-1} A_FT`` and dense ``B_TT``."""
    A_s = sys.A_TT.toarray()
    if sys.n_face_dofs:
        try:
            lu = spla.splu(sys.A_FF.tocsc())
        except RuntimeError as exc:
            raise EigenSolverError("A_FF factorization failed") from exc
        A_s -= sys.A_TF @ lu.solve(sys.A_FT.toarray())
    A_s = 0.5 * (A_s + A_s.T)
    return A_s, sys.B_TT.toarray()


@dataclass
class EigenResult:
    """Smallest discrete eigenpairs in ascending order.

    ``cell_vectors[:, j]`` is ``B``-normalised, so ``||u_T||_{L2} = 1``.
    """

    eigenvalues: np.ndarray
    cell_vectors: np.ndarray
    face_vectors: np.ndarray
    residuals: np.ndarray
    space: HHOSpace = field(repr=False)

    def eigenvector(self, j: int) -> HHOVector:
        """HHO eigenvector of (0-based) index ``j``."""
        sp_ = self.space
        return HHOVector(
            self.cell_vectors[:, j].reshape(-1, sp_.n_cell).copy(),
            self.face_vectors[:, j].reshape(-1, sp_.n_face).copy(),
        )

    def clusters(self, rtol: float = 1e-8) -> list[list[int]]:
        """Groups of indices whose eigenvalues agree to relative ``rtol``."""
        groups: list[list[int]] = []
        for j, lam in enumerate(self.eigenvalues):
            if groups and abs(lam - self.eigenvalues[groups[-1][-1]]) <= rtol * abs(lam):
                groups[-1].append(j)
            else:
                groups.append([j])
        return groups


class _SchurOperator:
    """Applies ``A_schur`` and ``A_schur^{-1} B`` using sparse factorizations."""

    def __init__(self, sys: BlockSystem):
        self.sys = sys
        self.lu_ff = spla.splu(sys.A_FF.tocsc()) if sys.n_face_dofs else None
        A, _ = sys.full_matrices()
        self.lu_full = spla.splu(A.tocsc())

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.sys.A_TT @ x
        if self.lu_ff is not None:
            y = y - self.sys.A_TF @ self.lu_ff.solve(self.sys.A_FT @ x)
        return y

    def solve(self, b: np.ndarray) -> np.ndarray:
        rhs = np.concatenate([b, np.zeros((self.sys.n_face_dofs,) + b.shape[1:])])
        return self.lu_full.solve(rhs)[: self.sys.N]

    def face_values(self, x: np.ndarray) -> np.ndarray:
        if self.lu_ff is None:
            return np.zeros((0,) + x.shape[1:])
        return -self.lu_ff.solve(self.sys.A_FT @ x)


def _normalise_signs(X: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(X), axis=0)
    s = np.sign(X[idx, np.arange(X.shape[1])])
    s[s == 0] = 1.0
    return X * s


def solve_evp(sys: BlockSystem, j_max: int, method: str = "auto") -> EigenResult:
    """The ``j_max`` smallest eigenpairs of the condensed pencil ``(A_schur, B_TT)``.

    ``method`` is ``"dense"`` (full generalized eigensolver on the Schur
    complement), ``"sparse"`` (shift-invert Lanczos about zero with a sparse LU
    of the block matrix) or ``"auto"``.
    """
    N = sys.N
    if j_max < 1:
        raise ValueError("j_max must be positive")
    if j_max > N:
        raise ValueError(f"only N = {N} finite eigenvalues exist; j_max = {j_max} is not representable")
    if method == "auto":
        method = "dense" if N <= DENSE_LIMIT else "sparse"
    op = _SchurOperator(sys)
    B = sys.B_TT
    if method == "dense":
        A_s, B_d = condense(sys)
        lam, X = sla.eigh(A_s, B_d, subset_by_index=[0, j_max - 1])
    elif method == "sparse":
        k = min(N - 1, j_max + max(2, j_max // 2))
        OPinv = spla.LinearOperator((N, N), matvec=op.solve, dtype=float)
        A_op = spla.LinearOperator((N, N), matvec=op.matvec, dtype=float)
        try:
            lam, X = spla.eigsh(A_op, k=k, M=B, sigma=0.0, OPinv=OPinv, which="LM", tol=1e-14)
        except spla.ArpackError as exc:
            raise EigenSolverError(str(exc)) from exc
        order = np.argsort(lam)[:j_max]
        lam, X = lam[order], X[:, order]
        # one step of inverse iteration with Rayleigh-Ritz to polish the pairs
        Y = op.solve(B @ X)
        Q = Y / np.sqrt(np.einsum("ij,ij->j", Y, B @ Y))
        AQ = np.column_stack([op.matvec(q) for q in Q.T])
        lam, Z = sla.eigh(Q.T @ AQ, Q.T @ (B @ Q))
        X = Q @ Z
    else:
        raise ValueError(f"unknown method {method!r}")
    X = X / np.sqrt(np.einsum("ij,ij->j", X, B @ X))
    X = _normalise_signs(X)
    BX = B @ X
    R = np.column_stack([op.matvec(X[:, j]) for j in range(j_max)]) - BX * lam
    res = np.linalg.norm(R, axis=0) / np.linalg.norm(BX, axis=0)
    if np.any(res > RESIDUAL_TOL * max(1.0, lam.max())):
        log.warning("eigenpair residuals %s exceed tolerance", res)
    if np.any(lam <= 0):
        raise EigenSolverError("non-positive discrete eigenvalue; a_h is not positive definite")
    return EigenResult(lam, X, op.face_values(X), res, sys.space)


@dataclass
class GLBEntry:
    index: int
    lambda_h: float
    glb: float
    condition_met: bool
    h_max: float


@dataclass
class GLBReport:
    entries: list[GLBEntry]
    params: Params

    def __getitem__(self, j: int) -> GLBEntry:
        """Entry for the 1-based eigenvalue index ``j``."""
        return self.entries[j - 1]


def glb_condition(lambda_h: float, h_max: float, params: Params) -> bool:
    """``sigma2^2 max{beta, h_max^2 lambda_h} <= alpha``.

    The ``beta`` branch holds by construction of :class:`Params` and is
    checked with the same ulp allowance; the mesh branch is checked exactly.
    """
    s2 = params.sigma2_sq
    return s2 * params.beta <= params.alpha * (1.0 + 1e-12) and s2 * h_max ** 2 * lambda_h <= params.alpha


def glb_check(eigenvalues, h_max: float, params: Params) -> GLBReport:
    lam = np.asarray(getattr(eigenvalues, "eigenvalues", eigenvalues), dtype=float)
    entries = []
    for j, value in enumerate(lam, start=1):
        ok = glb_condition(float(value), h_max, params)
        entries.append(GLBEntry(j, float(value), float(value) if ok else 0.0, ok, h_max))
    return GLBReport(entries, params)
