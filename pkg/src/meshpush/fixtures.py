"""Small hand-built meshes used by tests, the CLI and the fitting experiments."""
from __future__ import annotations

import numpy as np

from .mesh import Mesh


def stacked_triangles(gap: float = 0.5) -> Mesh:
    """Two copies of the right triangle (0,0),(1,0),(0,1): one at z=0, one at z=gap."""
    tri = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    upper = tri + [0.0, 0.0, gap]
    return Mesh(np.vstack([tri, upper]), [[0, 1, 2], [3, 4, 5]])


def two_tetrahedra() -> Mesh:
    """Stella octangula: a regular tetrahedron and its point reflection.

    Every face of each tetrahedron is pierced by a vertex spike of the other.
    """
    a = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64)
    faces = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    b = -a
    # reflection flips orientation
    return Mesh(np.vstack([a, b]), np.vstack([faces, faces[:, ::-1] + 4]))


_DIRS = [
    ((1, 0, 0), [(1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1)]),
    ((-1, 0, 0), [(0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0)]),
    ((0, 1, 0), [(0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 0)]),
    ((0, -1, 0), [(0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)]),
    ((0, 0, 1), [(0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]),
    ((0, 0, -1), [(0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0)]),
]


def voxel_surface(cells, scale: float = 1.0) -> Mesh:
    """Closed, outward-oriented triangulated boundary of a union of unit voxels."""
    occupied = {tuple(int(x) for x in c) for c in cells}
    index: dict[tuple[int, int, int], int] = {}
    verts, faces = [], []

    def vid(p):
        if p not in index:
            index[p] = len(verts)
            verts.append(p)
        return index[p]

    for c in sorted(occupied):
        for normal, quad in _DIRS:
            if tuple(c[k] + normal[k] for k in range(3)) in occupied:
                continue
            q = [vid(tuple(c[k] + corner[k] for k in range(3))) for corner in quad]
            faces += [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]
    return Mesh(np.array(verts, dtype=np.float64) * scale, faces)


def l_shape(scale: float = 1.0) -> Mesh:
    """Concave L-shaped prism: a 2x1x1 box fused with a 1x1x1 box on top of one end."""
    return voxel_surface([(0, 0, 0), (1, 0, 0), (0, 1, 0)], scale)
