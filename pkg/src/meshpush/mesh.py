"""Triangle mesh data model, icosphere generation, OBJ I/O and smoothness energies."""
from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field
from typing import BinaryIO, NamedTuple

import numpy as np
from scipy import sparse

from .errors import (
    EmptyMesh,
    IndexOutOfRange,
    InvalidMesh,
    IsolatedVertex,
    NonManifoldEdge,
    ParseError,
    SubdivisionTooLarge,
)

log = logging.getLogger(__name__)

MAX_SUBDIVISIONS = 6


def _frozen(a):
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Fixed-topology triangle mesh.

    ``vertices`` is ``(N_V, 3)`` float64, ``faces`` is ``(N_F, 3)`` int64 and
    ``face_colors`` is either ``None`` or ``(N_F, 3)`` RGB in ``[0, 1]``.
    Arrays are copied on construction and marked read-only.
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_colors: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces, dtype=np.int64)
        if v.size == 0:
            v = v.reshape(0, 3)
        if f.size == 0:
            f = f.reshape(0, 3)
        if v.ndim != 2 or v.shape[1] != 3:
            raise InvalidMesh(f"vertices must have shape (N, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise InvalidMesh(f"faces must have shape (F, 3), got {f.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidMesh("vertices contain non-finite values")
        if len(f):
            if f.min() < 0 or f.max() >= len(v):
                raise InvalidMesh("face index out of range")
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise InvalidMesh("face with repeated vertex index")
        object.__setattr__(self, "vertices", _frozen(v))
        object.__setattr__(self, "faces", _frozen(f))
        if self.face_colors is not None:
            c = np.asarray(self.face_colors, dtype=np.float64).reshape(-1, 3)
            if len(c) != len(f):
                raise InvalidMesh(f"{len(c)} face colors for {len(f)} faces")
            if np.any((c < 0) | (c > 1)):
                raise InvalidMesh("face colors must lie in [0, 1]")
            object.__setattr__(self, "face_colors", _frozen(c))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices) -> Mesh:
        return Mesh(vertices, self.faces, self.face_colors)

    def triangles(self) -> np.ndarray:
        """``(N_F, 3, 3)`` array of face corner positions."""
        return self.vertices[self.faces]

    def bbox_diagonal(self) -> float:
        if self.n_vertices == 0:
            return 0.0
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def edges(self) -> np.ndarray:
        """Unique undirected edges as a sorted ``(E, 2)`` array."""
        return unique_edges(self.faces)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()) + self.n_faces

    def face_areas(self) -> np.ndarray:
        t = self.triangles()
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def signed_volume(self) -> float:
        t = self.triangles()
        return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)


def unique_edges(faces: np.ndarray) -> np.ndarray:
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0) if len(e) else e.reshape(0, 2)


# --- icosphere -------------------------------------------------------------

_PHI = (1.0 + 5.0 ** 0.5) / 2.0

_ICO_VERTS = [
    [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
    [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
    [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
]

_ICO_FACES = [
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
]


def make_icosphere(subdivisions: int = 0) -> Mesh:
    """Unit-radius icosphere centred at the origin with outward-facing faces.

    Each subdivision splits every triangle into four, so the result has
    ``20 * 4**s`` faces and ``10 * 4**s + 2`` vertices.
    """
    subdivisions = int(subdivisions)
    if subdivisions < 0 or subdivisions > MAX_SUBDIVISIONS:
        raise SubdivisionTooLarge(
            f"subdivisions must be in [0, {MAX_SUBDIVISIONS}], got {subdivisions}"
        )
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in _ICO_VERTS]
    faces = [tuple(f) for f in _ICO_FACES]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            idx = cache.get(key)
            if idx is None:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                idx = cache[key] = len(verts) - 1
            return idx

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return Mesh(np.array(verts), np.array(faces, dtype=np.int64))


# --- OBJ -------------------------------------------------------------------

class LoadedObj(NamedTuple):
    mesh: Mesh
    fan_triangulated: int  # number of >3-gon faces split on load


_IGNORED_OBJ_KEYWORDS = {
    "vn", "vt", "vp", "o", "g", "s", "usemtl", "mtllib", "l", "p",
    "cstype", "deg", "curv", "surf", "parm", "end",
}


def _parse_index(token: str, n_vertices: int, lineno: int) -> int:
    head = token.split("/", 1)[0]
    try:
        i = int(head)
    except ValueError:
        raise ParseError(f"bad face index {token!r}", lineno) from None
    if i > 0:
        i -= 1
    elif i < 0:
        i = n_vertices + i
    else:
        raise IndexOutOfRange("face index 0 is not valid in OBJ", lineno)
    if not 0 <= i < n_vertices:
        raise IndexOutOfRange(f"face index {token!r} out of range", lineno)
    return i


def load_obj(stream: BinaryIO) -> LoadedObj:
    """Read ``v``/``f`` records from an OBJ byte stream.

    Texture/normal references (``i/j/k``) are stripped, negative indices are
    resolved relative to the vertices read so far, and polygons are fan
    triangulated. A file without any ``v`` record raises ``EmptyMesh``; a
    vertex-only file yields a mesh with zero faces (a point set).
    """
    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    fanned = 0
    for lineno, raw in enumerate(io.TextIOWrapper(stream, encoding="utf-8"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        key = tok[0]
        if key == "v":
            if len(tok) < 4:
                raise ParseError("vertex needs 3 coordinates", lineno)
            try:
                verts.append((float(tok[1]), float(tok[2]), float(tok[3])))
            except ValueError:
                raise ParseError(f"bad vertex coordinate in {line!r}", lineno) from None
        elif key == "f":
            if len(tok) < 4:
                raise ParseError("face needs at least 3 indices", lineno)
            idx = [_parse_index(t, len(verts), lineno) for t in tok[1:]]
            if len(set(idx)) != len(idx):
                raise ParseError("face repeats a vertex", lineno)
            if len(idx) > 3:
                fanned += 1
            for k in range(1, len(idx) - 1):
                faces.append((idx[0], idx[k], idx[k + 1]))
        elif key in _IGNORED_OBJ_KEYWORDS:
            continue
        else:
            raise ParseError(f"unsupported statement {key!r}", lineno)
    if not verts:
        raise EmptyMesh("OBJ stream contains no vertices")
    if fanned:
        log.warning("fan-triangulated %d polygonal face(s)", fanned)
    return LoadedObj(Mesh(np.array(verts), np.array(faces, dtype=np.int64).reshape(-1, 3)), fanned)


def save_obj(mesh: Mesh, stream: BinaryIO) -> None:
    # repr() gives the shortest string that round-trips exactly
    out = []
    for x, y, z in mesh.vertices.tolist():
        out.append(f"v {x!r} {y!r} {z!r}\n")
    for a, b, c in (mesh.faces + 1).tolist():
        out.append(f"f {a} {b} {c}\n")
    stream.write("".join(out).encode("utf-8"))


def read_obj(path) -> Mesh:
    with open(path, "rb") as fh:
        return load_obj(fh).mesh


def write_obj(path, mesh: Mesh) -> None:
    with open(path, "wb") as fh:
        save_obj(mesh, fh)


def save_colors(mesh: Mesh, path) -> None:
    """Write face colours as a JSON array of ``[r, g, b]`` triples."""
    if mesh.face_colors is None:
        raise InvalidMesh("mesh has no face colors")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mesh.face_colors.tolist(), fh)


def load_colors(mesh: Mesh, path) -> Mesh:
    with open(path, encoding="utf-8") as fh:
        colors = json.load(fh)
    return Mesh(mesh.vertices, mesh.faces, colors)


# --- adjacency ---------------------------------------------------------------

@dataclass(frozen=True)
class AdjacencyIndex:
    vertex_neighbors: tuple[frozenset, ...]
    vertex_faces: tuple[frozenset, ...]
    edge_to_faces: dict = field(repr=False)

    def neighbors(self, v: int) -> frozenset:
        return self.vertex_neighbors[v]

    def shares_vertex(self, f: int, g: int, faces: np.ndarray) -> bool:
        return any(f in self.vertex_faces[v] for v in faces[g])

    def face_pairs_sharing_vertex(self) -> set[tuple[int, int]]:
        pairs = set()
        for fs in self.vertex_faces:
            fs = sorted(fs)
            for i, a in enumerate(fs):
                for b in fs[i + 1:]:
                    pairs.add((a, b))
        return pairs

    def is_closed_manifold(self) -> bool:
        return all(len(fs) == 2 for fs in self.edge_to_faces.values())


def build_adjacency(mesh: Mesh) -> AdjacencyIndex:
    nbrs = [set() for _ in range(mesh.n_vertices)]
    vfaces = [set() for _ in range(mesh.n_vertices)]
    e2f: dict[tuple[int, int], list[int]] = {}
    for fi, (a, b, c) in enumerate(mesh.faces.tolist()):
        for u, v in ((a, b), (b, c), (c, a)):
            nbrs[u].add(v)
            nbrs[v].add(u)
            e2f.setdefault((u, v) if u < v else (v, u), []).append(fi)
        for v in (a, b, c):
            vfaces[v].add(fi)
    return AdjacencyIndex(
        tuple(frozenset(s) for s in nbrs),
        tuple(frozenset(s) for s in vfaces),
        {k: tuple(v) for k, v in sorted(e2f.items())},
    )


# --- smoothness energies -----------------------------------------------------

def _uniform_laplacian(mesh: Mesh) -> sparse.csr_matrix:
    e = mesh.edges()
    n = mesh.n_vertices
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    adj = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    deg = np.asarray(adj.sum(axis=1)).ravel()
    if np.any(deg == 0):
        raise IsolatedVertex(f"vertex {int(np.argmin(deg))} has no neighbours")
    return sparse.identity(n, format="csr") - sparse.diags(1.0 / deg) @ adj


def laplacian_energy(mesh: Mesh) -> tuple[float, np.ndarray]:
    """Uniform Laplacian energy ``sum_v |v - mean(neighbours(v))|^2`` and its gradient."""
    lap = _uniform_laplacian(mesh)
    r = lap @ mesh.vertices
    return float(np.sum(r * r)), 2.0 * (lap.T @ r)


def _interior_edges(mesh: Mesh) -> np.ndarray:
    """``(E, 2)`` face-index pairs across every interior edge.

    Boundary edges (one face) are skipped; an edge with three or more faces
    raises ``NonManifoldEdge``.
    """
    f = mesh.faces
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    e.sort(axis=1)
    owner = np.tile(np.arange(len(f)), 3)
    order = np.lexsort((e[:, 1], e[:, 0]))
    e, owner = e[order], owner[order]
    _, start, counts = np.unique(e, axis=0, return_index=True, return_counts=True)
    if np.any(counts > 2):
        bad = e[start[np.argmax(counts > 2)]]
        raise NonManifoldEdge(f"edge {tuple(int(x) for x in bad)} is shared by more than two faces")
    start = start[counts == 2]
    return np.stack([owner[start], owner[start + 1]], axis=1)


def crease_energy(mesh: Mesh) -> tuple[float, np.ndarray]:
    """Dihedral crease energy ``sum_e (1 - cos theta_e)^2`` and its gradient.

    ``theta_e`` is the angle between the normals of the two faces across edge
    ``e``. Boundary edges contribute nothing.
    """
    pairs = _interior_edges(mesh)
    t = mesh.triangles()
    e1 = t[:, 1] - t[:, 0]
    e2 = t[:, 2] - t[:, 0]
    n = np.cross(e1, e2)
    nlen = np.maximum(np.linalg.norm(n, axis=1), 1e-300)
    nhat = n / nlen[:, None]
    a, b = pairs[:, 0], pairs[:, 1]
    cos = np.einsum("ij,ij->i", nhat[a], nhat[b])
    energy = float(np.sum((1.0 - cos) ** 2))

    dcos = -2.0 * (1.0 - cos)
    gn = np.zeros_like(n)
    np.add.at(gn, a, dcos[:, None] * (nhat[b] - cos[:, None] * nhat[a]) / nlen[a, None])
    np.add.at(gn, b, dcos[:, None] * (nhat[a] - cos[:, None] * nhat[b]) / nlen[b, None])
    # n = e1 x e2  =>  dn/de1 . g = e2 x g,  dn/de2 . g = g x e1
    g1 = np.cross(e2, gn)
    g2 = np.cross(gn, e1)
    grad = np.zeros_like(mesh.vertices)
    np.add.at(grad, mesh.faces[:, 1], g1)
    np.add.at(grad, mesh.faces[:, 2], g2)
    np.add.at(grad, mesh.faces[:, 0], -(g1 + g2))
    return energy, grad
