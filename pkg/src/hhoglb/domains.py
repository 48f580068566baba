"""Built-in benchmark domains and their reference eigenvalues."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .mesh import Mesh, build_mesh, read_mesh


@dataclass(frozen=True)
class DomainSpec:
    name: str
    vertices: np.ndarray
    triangles: np.ndarray
    reference: dict[int, float] = field(default_factory=dict)
    description: str = ""
    source: str = ""

    def mesh(self) -> Mesh:
        return build_mesh(self.vertices, self.triangles)

    def reference_eigenvalue(self, j: int = 1) -> float | None:
        return self.reference.get(j)


@lru_cache(maxsize=1)
def _table() -> dict:
    text = resources.files("hhoglb").joinpath("data/domains.json").read_text()
    return json.loads(text)


def domain_names() -> list[str]:
    return list(_table())


def get_domain(name: str) -> DomainSpec:
    table = _table()
    if name not in table:
        raise KeyError(f"unknown domain {name!r}; available: {', '.join(table)}")
    d = table[name]
    ref = {int(k): float(v) for k, v in (d.get("reference") or {}).items()}
    return DomainSpec(
        name,
        np.array(d["vertices"], dtype=float),
        np.array(d["triangles"], dtype=np.int64),
        ref,
        d.get("description", ""),
        d.get("source", ""),
    )


def load_domain(name_or_path: str) -> tuple[Mesh, DomainSpec | None]:
    """Mesh of a built-in domain, or of a mesh file (no reference values then)."""
    if name_or_path in _table():
        spec = get_domain(name_or_path)
        return spec.mesh(), spec
    path = Path(name_or_path)
    if not path.exists():
        raise KeyError(f"{name_or_path!r} is neither a built-in domain nor an existing mesh file")
    return read_mesh(path), None
