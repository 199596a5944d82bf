"""Triangle meshes: container, topology queries and Wavefront OBJ I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class SurfaceMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    closed: bool = True
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError("vertices must have shape (n, 3)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError("triangles must have shape (m, 3)")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def _cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    # -- geometry -----------------------------------------------------------
    def face_normals(self, unit=True) -> np.ndarray:
        v = self.vertices
        a, b, c = v[self.triangles[:, 0]], v[self.triangles[:, 1]], v[self.triangles[:, 2]]
        n = np.cross(b - a, c - a)
        if unit:
            n = n / np.linalg.norm(n, axis=1, keepdims=True)
        return n

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals(unit=False), axis=1)

    def area(self) -> float:
        return float(self.face_areas().sum())

    def volume(self) -> float:
        """Signed enclosed volume; positive for outward orientation."""
        v = self.vertices
        a, b, c = v[self.triangles[:, 0]], v[self.triangles[:, 1]], v[self.triangles[:, 2]]
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted unit vertex normals."""
        def build():
            fn = self.face_normals(unit=False)
            n = np.zeros_like(self.vertices)
            for k in range(3):
                np.add.at(n, self.triangles[:, k], fn)
            norm = np.linalg.norm(n, axis=1, keepdims=True)
            norm[norm == 0] = 1.0
            return n / norm
        return self._cached("vnormals", build)

    def vertex_areas(self) -> np.ndarray:
        """Barycentric (one third of incident face area) vertex weights."""
        def build():
            w = np.zeros(self.n_vertices)
            fa = self.face_areas() / 3.0
            for k in range(3):
                np.add.at(w, self.triangles[:, k], fa)
            return w
        return self._cached("vareas", build)

    def bbox_diameter(self) -> float:
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    # -- topology -----------------------------------------------------------
    def _edge_keys(self):
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return e[:, 0] * self.n_vertices + e[:, 1]

    def edges(self) -> np.ndarray:
        """Unique undirected edges, sorted pairs."""
        def build():
            k = np.unique(self._edge_keys())
            return np.column_stack([k // self.n_vertices, k % self.n_vertices])
        return self._cached("edges", build)

    def edge_face_counts(self) -> np.ndarray:
        _, counts = np.unique(self._edge_keys(), return_counts=True)
        return counts

    def adjacency(self) -> sp.csr_matrix:
        def build():
            e = self.edges()
            n = self.n_vertices
            data = np.ones(2 * len(e), dtype=np.int8)
            rows = np.concatenate([e[:, 0], e[:, 1]])
            cols = np.concatenate([e[:, 1], e[:, 0]])
            return sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        return self._cached("adj", build)

    def ring(self, k: int = 1) -> sp.csr_matrix:
        """Boolean k-ring neighbourhood matrix, diagonal excluded."""
        def build():
            a = self.adjacency().astype(bool).astype(np.int32)
            r = a.copy()
            for _ in range(k - 1):
                r = r + r @ a
            r = r.tocsr()
            r.setdiag(0)
            r.eliminate_zeros()
            r.data[:] = 1
            return r
        return self._cached(("ring", k), build)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()) + self.n_triangles

    def components(self) -> tuple[int, np.ndarray]:
        return connected_components(self.adjacency(), directed=False)

    def boundary_vertices(self) -> np.ndarray:
        k, counts = np.unique(self._edge_keys(), return_counts=True)
        k = k[counts == 1]
        return np.unique(np.concatenate([k // self.n_vertices, k % self.n_vertices]))

    def validate(self):
        """Raise MeshError if the mesh breaks its invariants."""
        if self.n_triangles == 0:
            raise MeshError("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= self.n_vertices:
            raise MeshError("triangle index out of range")
        scale = max(self.bbox_diameter(), 1e-300)
        bad = np.flatnonzero(self.face_areas() <= 1e-14 * scale**2)
        if len(bad):
            raise MeshError(f"{len(bad)} degenerate triangles, first {bad[:5].tolist()}")
        counts = self.edge_face_counts()
        if self.closed and np.any(counts != 2):
            raise MeshError("closed mesh has edges not shared by exactly two triangles")
        if np.any(counts > 2):
            raise MeshError("non-manifold edge")
        # consistent orientation: each directed edge appears at most once
        t = self.triangles
        d = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        if len(np.unique(d[:, 0] * self.n_vertices + d[:, 1])) != len(d):
            raise MeshError("inconsistent triangle orientation")
        if self.closed and self.volume() <= 0:
            raise MeshError("closed mesh is not outward oriented (negative volume)")
        return self

    # -- transforms ---------------------------------------------------------
    def transformed(self, rotation=None, translation=None, scale=1.0) -> "SurfaceMesh":
        v = np.array(self.vertices)
        if rotation is not None:
            v = v @ np.asarray(rotation).T
        v = v * scale
        if translation is not None:
            v = v + np.asarray(translation)
        return SurfaceMesh(v, self.triangles, self.closed)

    def submesh(self, vertex_mask) -> tuple["SurfaceMesh", np.ndarray]:
        """Triangles whose three vertices are all selected; returns mesh and old indices."""
        vertex_mask = np.asarray(vertex_mask, dtype=bool)
        keep = vertex_mask[self.triangles].all(axis=1)
        old = np.flatnonzero(vertex_mask)
        remap = -np.ones(self.n_vertices, dtype=np.int64)
        remap[old] = np.arange(len(old))
        tri = remap[self.triangles[keep]]
        sub = SurfaceMesh(self.vertices[old], tri, closed=False)
        return sub, old


def merge_meshes(meshes, closed=True) -> SurfaceMesh:
    verts, tris, off = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + off)
        off += m.n_vertices
    return SurfaceMesh(np.vstack(verts), np.vstack(tris), closed=closed)


def write_obj(mesh: SurfaceMesh, path, comment: str | None = None):
    path = Path(path)
    with path.open("w") as fh:
        fh.write("# mcfsurgery mesh\n")
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
        for a, b, c in mesh.triangles + 1:
            fh.write(f"f {a} {b} {c}\n")


def read_obj(path, closed: bool | None = None) -> SurfaceMesh:
    """Read vertices and triangular faces; `f` entries may carry /vt/vn suffixes."""
    verts, faces = [], []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                if len(idx) != 3:
                    raise MeshError(f"line {lineno}: only triangles are supported")
                faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
    mesh = SurfaceMesh(np.array(verts, dtype=float).reshape(-1, 3),
                       np.array(faces, dtype=np.int64).reshape(-1, 3), closed=True)
    if closed is None:
        closed = len(mesh.boundary_vertices()) == 0
    return SurfaceMesh(mesh.vertices, mesh.triangles, closed=closed)
