"""Guaranteed lower Dirichlet eigenvalue bounds with a hybrid high-order method."""

import os as _os

# the thread count has to reach BLAS before numpy is first imported
_threads = _os.environ.get("HHOGLB_NUM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .adaptive import ConvergenceHistory, HistoryRow, run_history  # noqa: E402
from .assembly import EigenResult, GLBReport, assemble, condense, glb_check, solve_evp  # noqa: E402
from .domains import DomainSpec, domain_names, get_domain, load_domain  # noqa: E402
from .estimator import Indicators, estimate, mark_doerfler, verify_A1_A2  # noqa: E402
from .hho import HHOSpace, HHOVector, Params  # noqa: E402
from .mesh import Mesh, MeshError, bisect, build_mesh, read_mesh, uniform_refine, write_mesh  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "ConvergenceHistory",
    "DomainSpec",
    "EigenResult",
    "GLBReport",
    "HHOSpace",
    "HHOVector",
    "HistoryRow",
    "Indicators",
    "Mesh",
    "MeshError",
    "Params",
    "assemble",
    "bisect",
    "build_mesh",
    "condense",
    "domain_names",
    "estimate",
    "get_domain",
    "glb_check",
    "load_domain",
    "mark_doerfler",
    "read_mesh",
    "run_history",
    "solve_evp",
    "uniform_refine",
    "verify_A1_A2",
    "write_mesh",
]
