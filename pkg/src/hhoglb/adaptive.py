"""Adaptive and uniform refinement loops with convergence histories."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import assemble, glb_check, solve_evp
from .bases import dim_p
from .estimator import estimate, mark_doerfler, verify_A1_A2
from .hho import HHOSpace, Params
from .mesh import Mesh, bisect, uniform_refine

log = logging.getLogger(__name__)

CSV_HEADER = ("ndof", "hmax", "lambda_h", "glb", "eta_sq", "refine_mode")


@dataclass
class HistoryRow:
    ndof: int
    hmax: float
    lambda_h: float
    glb: float
    eta_sq: float
    refine_mode: str
    n_triangles: int = 0
    condition_met: bool = False
    residual: float = 0.0
    a1_rel: float = 0.0
    a2_rel: float = 0.0
    eigenvalues: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)


@dataclass
class ConvergenceHistory:
    rows: list[HistoryRow]
    p: int
    target_index: int
    reference: float | None = None
    params: Params | None = None
    final_mesh: Mesh | None = field(default=None, repr=False)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def errors(self) -> np.ndarray:
        """``lambda - GLB`` per row (needs a reference value)."""
        if self.reference is None:
            raise ValueError("no reference eigenvalue available")
        return self.reference - self.column("glb")

    def efficiency(self) -> np.ndarray:
        """``|lambda_ref - lambda_h| / eta^2`` per row."""
        if self.reference is None:
            raise ValueError("no reference eigenvalue available")
        return np.abs(self.reference - self.column("lambda_h")) / self.column("eta_sq")

    def rate(self, last: int = 6) -> float:
        """Least-squares slope of ``log(lambda - GLB)`` against ``log(ndof)`` over the last rows."""
        rows = slice(-last, None)
        x = np.log(self.column("ndof")[rows].astype(float))
        y = np.log(self.errors[rows])
        return float(np.polyfit(x, y, 1)[0])

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for r in self.rows:
                writer.writerow(
                    [
                        r.ndof,
                        "%.17g" % r.hmax,
                        "%.17g" % r.lambda_h,
                        "%.17g" % r.glb,
                        "%.17g" % r.eta_sq,
                        r.refine_mode,
                    ]
                )


def count_ndof(mesh: Mesh, p: int) -> int:
    """``dim V_h`` without building the space."""
    return mesh.n_triangles * dim_p(p + 1) + len(mesh.interior_edges) * (p + 1)


def run_history(
    mesh: Mesh,
    p: int,
    params: Params | None = None,
    target_index: int = 1,
    mode: str = "adaptive",
    theta: float = 0.5,
    max_ndof: int = 50_000,
    reference: float | None = None,
    check_hypotheses: bool = True,
    callback=None,
) -> ConvergenceHistory:
    """Solve, certify, estimate and refine until the next mesh would exceed ``max_ndof``.

    In ``"adaptive"`` mode, cells are Doerfler-marked with respect to the
    indicators of the ``target_index``-th eigenfunction and bisected; whenever
    the mesh-size part of the lower-bound condition fails, the mesh is refined
    uniformly instead.  ``"uniform"`` mode always refines uniformly.
    """
    if mode not in ("adaptive", "uniform"):
        raise ValueError(f"mode must be 'adaptive' or 'uniform', got {mode!r}")
    params = params or Params()
    j = target_index
    history = ConvergenceHistory([], p, j, reference, params)
    if count_ndof(mesh, p) > max_ndof:
        raise ValueError(f"initial mesh already has more than max_ndof = {max_ndof} unknowns")
    while True:
        space = HHOSpace(mesh, p)
        system = assemble(mesh, p, params, space)
        result = solve_evp(system, j)
        h = mesh.h_max
        entry = glb_check(result, h, params)[j]
        u = result.eigenvector(j - 1)
        lam = float(result.eigenvalues[j - 1])
        indicators = estimate(space, u, lam)
        a1 = a2 = 0.0
        if check_hypotheses:
            a1, a2 = verify_A1_A2(space, u, lam).relative
        adaptive = mode == "adaptive" and entry.condition_met
        row = HistoryRow(
            ndof=space.ndof,
            hmax=h,
            lambda_h=lam,
            glb=entry.glb,
            eta_sq=indicators.total,
            refine_mode="adaptive" if adaptive else "uniform",
            n_triangles=mesh.n_triangles,
            condition_met=entry.condition_met,
            residual=float(result.residuals[j - 1]),
            a1_rel=a1,
            a2_rel=a2,
            eigenvalues=result.eigenvalues.copy(),
        )
        history.rows.append(row)
        history.final_mesh = mesh
        log.info("ndof=%d hmax=%.3g lambda_h=%.12g glb=%.12g eta2=%.3g", row.ndof, h, lam, row.glb, row.eta_sq)
        if callback is not None:
            callback(row)
        if adaptive:
            new_mesh = bisect(mesh, mark_doerfler(indicators, theta))
        else:
            new_mesh = uniform_refine(mesh)
        if count_ndof(new_mesh, p) > max_ndof:
            break
        mesh = new_mesh
    return history
