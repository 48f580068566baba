"""Conforming triangulations with newest-vertex bisection.

Conventions
-----------
* Triangles are stored counter-clockwise with the refinement edge opposite
  local vertex 0 (so between local vertices 1 and 2).  Local edge ``i`` is
  the edge opposite local vertex ``i``.
* Edges are numbered by sorting their vertex pairs.  Each edge is stored in
  the counter-clockwise direction of its first (lowest-index) adjacent
  triangle ``T+``; its normal ``nu_F`` is the outward normal of ``T+`` and
  points into ``T-`` for interior edges.  The tangent ``t_F`` is ``nu_F``
  rotated by ``+pi/2``, i.e. the edge direction.
* Slits are modelled by duplicated vertices, so the two sides of a slit are
  distinct boundary edges.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    pass


def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a, b, c = (vertices[triangles[:, i]] for i in range(3))
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable conforming triangulation.  Use :func:`build_mesh` to construct one."""

    vertices: np.ndarray
    triangles: np.ndarray
    generation: np.ndarray
    edges: np.ndarray = field(repr=False)
    edge_triangles: np.ndarray = field(repr=False)
    triangle_edges: np.ndarray = field(repr=False)

    @classmethod
    def _from_arrays(cls, vertices, triangles, generation) -> "Mesh":
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        nt = len(triangles)
        local = triangles[:, [[1, 2], [2, 0], [0, 1]]].reshape(-1, 2)
        keys = np.sort(local, axis=1)
        uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if np.any(counts > 2):
            raise MeshError("non-conforming input: an edge is shared by more than two triangles")
        order = np.argsort(inverse, kind="stable")
        ne = len(uniq)
        start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        occ_first = order[start]
        occ_second = np.where(counts == 2, order[np.minimum(start + 1, len(order) - 1)], -1)
        edges = local[occ_first]
        edge_tris = np.full((ne, 2), -1, dtype=np.int64)
        edge_tris[:, 0] = occ_first // 3
        interior = occ_second >= 0
        edge_tris[interior, 1] = occ_second[interior] // 3
        if np.any(local[occ_second[interior], 0] != edges[interior, 1]):
            raise MeshError("inconsistent orientation across an interior edge (overlapping triangles)")
        tri_edges = inverse.reshape(nt, 3)
        for a in (vertices, triangles, generation, edges, edge_tris, tri_edges):
            a.setflags(write=False)
        return cls(vertices, triangles, generation, edges, edge_tris, tri_edges)

    # -- sizes -------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def refinement_edge(self) -> np.ndarray:
        """Local index of the refinement edge of every triangle (always 0 by convention)."""
        return np.zeros(self.n_triangles, dtype=np.int64)

    # -- geometry ----------------------------------------------------------
    @property
    def is_boundary(self) -> np.ndarray:
        return self.edge_triangles[:, 1] < 0

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.is_boundary)

    @property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def edge_tangents(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return d / np.hypot(d[:, 0], d[:, 1])[:, None]

    @property
    def edge_normals(self) -> np.ndarray:
        t = self.edge_tangents
        return np.column_stack([t[:, 1], -t[:, 0]])

    @property
    def areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.triangles)

    @property
    def diameters(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        d = v[:, [1, 2, 0]] - v[:, [2, 0, 1]]
        return np.hypot(d[..., 0], d[..., 1]).max(axis=1)

    @property
    def h_max(self) -> float:
        return float(self.diameters.max())

    @property
    def edge_orientation(self) -> np.ndarray:
        """``+1`` where local edge ``i`` of a triangle runs along the stored edge direction."""
        local_start = self.triangles[:, [1, 2, 0]]
        return np.where(self.edges[self.triangle_edges, 0] == local_start, 1, -1)

    def min_angles(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            a = v[:, (i + 1) % 3] - v[:, i]
            b = v[:, (i + 2) % 3] - v[:, i]
            cos = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.arccos(np.clip(cos, -1.0, 1.0)))
        return np.min(angles, axis=0)

    def is_conforming(self) -> bool:
        """Edge-use counting plus a scan for vertices inside boundary edges."""
        return _hanging_vertex(self.vertices, self.edges[self.is_boundary]) is None

    def summary(self) -> dict:
        return {
            "vertices": self.n_vertices,
            "triangles": self.n_triangles,
            "edges": self.n_edges,
            "interior_edges": int((~self.is_boundary).sum()),
            "boundary_edges": int(self.is_boundary.sum()),
            "h_max": self.h_max,
            "area": float(self.areas.sum()),
            "min_angle_deg": float(np.degrees(self.min_angles().min())),
        }


def _hanging_vertex(vertices: np.ndarray, boundary_edges: np.ndarray):
    """Index of a hanging vertex on a boundary edge, else ``None``.

    A vertex strictly inside a boundary edge ``(a, b)`` is hanging when
    boundary edges through such vertices join ``a`` to ``b``: the other side
    of the edge is then subdivided.  Vertices of a slit side merely lie on the
    opposite side's edges; with duplicated vertex ids they never form that
    chain, so slits are accepted.
    """
    if len(boundary_edges) == 0:
        return None
    a = vertices[boundary_edges[:, 0]]
    b = vertices[boundary_edges[:, 1]]
    d = b - a
    len2 = np.einsum("ij,ij->i", d, d)
    hits: dict[int, list[int]] = {}
    for start in range(0, len(vertices), 256):
        x = vertices[start:start + 256]
        r = x[:, None, :] - a[None]
        s = np.einsum("vij,ij->vi", r, d) / len2
        cross = r[..., 0] * d[None, :, 1] - r[..., 1] * d[None, :, 0]
        hit = (np.abs(cross) <= 1e-12 * len2) & (s > 1e-12) & (s < 1 - 1e-12)
        for v, e in np.argwhere(hit):
            hits.setdefault(int(e), []).append(start + int(v))
    if not hits:
        return None
    neighbours: dict[int, set[int]] = {}
    for i, j in boundary_edges:
        neighbours.setdefault(int(i), set()).add(int(j))
        neighbours.setdefault(int(j), set()).add(int(i))
    for e, inside in hits.items():
        first, last = int(boundary_edges[e, 0]), int(boundary_edges[e, 1])
        allowed = set(inside) | {last}
        seen, stack = {first}, [first]
        while stack:
            cur = stack.pop()
            for nb in neighbours.get(cur, ()):
                # the edge itself does not count as a chain
                if nb in allowed and nb not in seen and not (cur == first and nb == last):
                    seen.add(nb)
                    stack.append(nb)
        if last in seen:
            return inside[0]
    return None


def build_mesh(vertices, triangles) -> Mesh:
    """Validate a triangle list and derive edges, adjacency and refinement edges.

    Clockwise triangles are reoriented.  The initial refinement edge of each
    triangle is its longest edge.
    """
    vertices = np.array(vertices, dtype=float).reshape(-1, 2)
    triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    if not np.all(np.isfinite(vertices)):
        raise MeshError("vertex coordinates must be finite")
    if len(triangles) == 0:
        raise MeshError("empty triangle list")
    if triangles.min() < 0 or triangles.max() >= len(vertices):
        raise MeshError("triangle references an unknown vertex")
    if np.any(np.sort(triangles, axis=1)[:, :2] == np.sort(triangles, axis=1)[:, 1:]):
        raise MeshError("triangle with repeated vertex ids")
    if len(np.unique(np.sort(triangles, axis=1), axis=0)) != len(triangles):
        raise MeshError("duplicate triangle")
    area = _signed_areas(vertices, triangles)
    scale = np.ptp(vertices, axis=0).max() ** 2
    if np.any(np.abs(area) <= 1e-14 * scale):
        raise MeshError("degenerate triangle (zero area)")
    triangles = np.where((area < 0)[:, None], triangles[:, [0, 2, 1]], triangles)
    v = vertices[triangles]
    lengths = np.linalg.norm(v[:, [1, 2, 0]] - v[:, [2, 0, 1]], axis=-1)
    apex = np.argmax(lengths, axis=1)
    triangles = np.take_along_axis(triangles, (apex[:, None] + np.arange(3)) % 3, axis=1)
    mesh = Mesh._from_arrays(vertices, triangles, np.zeros(len(triangles), dtype=np.int64))
    bad = _hanging_vertex(mesh.vertices, mesh.edges[mesh.is_boundary])
    if bad is not None:
        raise MeshError(f"non-conforming input: hanging node at vertex {bad}")
    return mesh


def bisect(mesh: Mesh, marked) -> Mesh:
    """Newest-vertex bisection of the marked triangles plus conforming closure."""
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked, dtype=np.int64))
    if len(marked) == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.n_triangles:
        raise IndexError("marked triangle index out of range")
    edge_marked = np.zeros(mesh.n_edges, dtype=bool)
    edge_marked[mesh.triangle_edges[marked, 0]] = True
    return _refine_edges(mesh, edge_marked)


def _refine_edges(mesh: Mesh, edge_marked: np.ndarray) -> Mesh:
    te = mesh.triangle_edges
    edge_marked = edge_marked.copy()
    while True:
        touched = edge_marked[te].any(axis=1)
        ref = te[touched, 0]
        if edge_marked[ref].all():
            break
        edge_marked[ref] = True

    nv = mesh.n_vertices
    mid_id = np.full(mesh.n_edges, -1, dtype=np.int64)
    new_edges = np.flatnonzero(edge_marked)
    mid_id[new_edges] = nv + np.arange(len(new_edges))
    e = mesh.edges[new_edges]
    vertices = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])])

    t = mesh.triangles
    v0, v1, v2 = t[:, 0], t[:, 1], t[:, 2]
    m0, m1, m2 = (mid_id[te[:, i]] for i in range(3))
    split0 = m0 >= 0
    split1 = m1 >= 0
    split2 = m2 >= 0

    children = np.full((mesh.n_triangles, 4, 3), -1, dtype=np.int64)
    gen = np.repeat(mesh.generation[:, None], 4, axis=1).copy()
    keep = ~split0
    children[keep, 0] = t[keep]
    # first bisection: (m0, v0, v1) and (m0, v2, v0)
    c1 = np.stack([m0, v0, v1], axis=1)
    c2 = np.stack([m0, v2, v0], axis=1)
    s = split0 & ~split2
    children[s, 0] = c1[s]
    gen[s, 0] += 1
    s = split0 & split2
    children[s, 0] = np.stack([m2, m0, v0], axis=1)[s]
    children[s, 1] = np.stack([m2, v1, m0], axis=1)[s]
    gen[s, :2] += 2
    s = split0 & ~split1
    children[s, 2] = c2[s]
    gen[s, 2] += 1
    s = split0 & split1
    children[s, 2] = np.stack([m1, m0, v2], axis=1)[s]
    children[s, 3] = np.stack([m1, v0, m0], axis=1)[s]
    gen[s, 2:] += 2

    flat = children.reshape(-1, 3)
    valid = flat[:, 0] >= 0
    return Mesh._from_arrays(vertices, flat[valid], gen.reshape(-1)[valid])


def uniform_refine(mesh: Mesh) -> Mesh:
    """Bisect every edge once: each triangle becomes four children."""
    return _refine_edges(mesh, np.ones(mesh.n_edges, dtype=bool))


# -- plain-text mesh format ------------------------------------------------------

_HEADER = re.compile(r"vertices\s+(\d+)\s*/?\s*triangles\s+(\d+)", re.IGNORECASE)


def write_mesh(mesh: Mesh, path) -> None:
    """Write ``vertices N / triangles M`` followed by coordinates and 0-based triples."""
    lines = [f"vertices {mesh.n_vertices} / triangles {mesh.n_triangles}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    text = [ln.strip() for ln in Path(path).read_text().splitlines()]
    text = [ln for ln in text if ln and not ln.startswith("#")]
    if not text:
        raise MeshError(f"{path}: empty mesh file")
    header = _HEADER.match(text[0])
    if header is None:
        raise MeshError(f"{path}: expected header 'vertices N / triangles M'")
    nv, nt = int(header.group(1)), int(header.group(2))
    if len(text) < 1 + nv + nt:
        raise MeshError(f"{path}: truncated mesh file")
    try:
        verts = [[float(s) for s in ln.split()[:2]] for ln in text[1:1 + nv]]
        # a trailing boundary tag on triangle lines is accepted and ignored
        tris = [[int(s) for s in ln.split()[:3]] for ln in text[1 + nv:1 + nv + nt]]
    except ValueError as exc:
        raise MeshError(f"{path}: {exc}") from exc
    return build_mesh(verts, tris)
