"""Non-intersecting deformation by pushing faces.

One step moves every vertex ``v`` by ``d[v] * u_hat``. The distances ``d``
minimise ``sum(d)`` subject to ``d >= d_min`` and, for every pair of faces
whose footprints in the plane perpendicular to ``u_hat`` overlap, one
ordering constraint per corner of the overlap polygon::

    beta_upper . d[upper] - beta_lower . d[lower]
        >= (q_lower - q_upper) . u_hat + epsilon

``beta_*`` are the corner's barycentric coordinates on each face. Depth
differences are affine over the overlap polygon, so keeping every corner
ordered keeps the whole overlap ordered and the faces cannot cross.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import OrderingViolated, PushInfeasible, StepError, VerificationFailed, ZeroDirection
from .geometry import (
    ProjectionFrame,
    barycentric_batch,
    broad_phase_pairs,
    clip_triangles,
    count_intersecting_faces,
    orthonormal_basis,
    project_mesh,
    separated_triangles_2d,
)
from .lp import LinearProgram, LpSolution, lp_backward, solve_lp
from .mesh import Mesh


@dataclass(frozen=True, eq=False)
class DeformStep:
    direction: np.ndarray
    d_min: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.direction, dtype=np.float64).reshape(3)
        if not np.linalg.norm(u) > 1e-9:
            raise ZeroDirection(f"direction {u.tolist()} is too short")
        d = np.asarray(self.d_min, dtype=np.float64).reshape(-1)
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValueError("d_min must be finite and non-negative")
        object.__setattr__(self, "direction", u)
        object.__setattr__(self, "d_min", d)

    @property
    def u_hat(self) -> np.ndarray:
        return self.direction / np.linalg.norm(self.direction)


@dataclass(frozen=True)
class PushConfig:
    """Per-step settings. ``None`` tolerances are derived from the mesh scale."""

    epsilon: float | None = None  # default 1e-3 * bbox diagonal
    area_tol: float | None = None  # default 1e-9 * bbox diagonal^2
    ordering_tol: float | None = None  # default 1e-9 * bbox diagonal
    verify_output: bool = False
    max_lp_iterations: int | None = None
    lp_pricing: str = "bland"

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def resolved(self, mesh: Mesh) -> PushConfig:
        diag = max(mesh.bbox_diagonal(), 1e-12)
        return replace(
            self,
            epsilon=1e-3 * diag if self.epsilon is None else self.epsilon,
            area_tol=1e-9 * diag * diag if self.area_tol is None else self.area_tol,
            ordering_tol=1e-9 * diag if self.ordering_tol is None else self.ordering_tol,
        )


class PushRow(NamedTuple):
    face_lower: int
    face_upper: int
    corner: int
    coeffs: tuple  # ((vertex, weight), ...): -beta_lower then +beta_upper
    rhs: float


@dataclass(frozen=True, eq=False)
class PushConstraintSet:
    """Ordering constraints for one step, one row per overlap-polygon corner.

    Rows are sorted by ``(face_lower, face_upper, corner)``. ``labels[r]``
    says what the corner is geometrically: ``("lower", i)`` / ``("upper", j)``
    for a vertex of either face, or ``("cross", lower_edge, upper_edge)``
    with edges given as pairs of local vertex indices.
    """

    frame: ProjectionFrame
    epsilon: float
    face_lower: np.ndarray
    face_upper: np.ndarray
    corner: np.ndarray
    lower_vertices: np.ndarray  # (R, 3)
    upper_vertices: np.ndarray  # (R, 3)
    beta_lower: np.ndarray  # (R, 3)
    beta_upper: np.ndarray  # (R, 3)
    rhs: np.ndarray
    points2d: np.ndarray  # (R, 2) corner positions in the projection plane
    labels: tuple
    pair_count: int
    skipped_degenerate: int

    def __len__(self):
        return len(self.rhs)

    def rows(self):
        for r in range(len(self)):
            coeffs = tuple(zip(self.lower_vertices[r].tolist(), (-self.beta_lower[r]).tolist())) + tuple(
                zip(self.upper_vertices[r].tolist(), self.beta_upper[r].tolist())
            )
            yield PushRow(int(self.face_lower[r]), int(self.face_upper[r]), int(self.corner[r]),
                          coeffs, float(self.rhs[r]))

    def to_lp(self, d_min) -> LinearProgram:
        d_min = np.asarray(d_min, dtype=np.float64)
        idx = np.concatenate([self.lower_vertices, self.upper_vertices], axis=1)
        val = np.concatenate([-self.beta_lower, self.beta_upper], axis=1)
        return LinearProgram.from_padded(np.ones(len(d_min)), d_min, idx, val, self.rhs)


def _empty_constraints(frame, eps, skipped):
    z = np.zeros(0, dtype=np.int64)
    z3 = np.zeros((0, 3), dtype=np.int64)
    f3 = np.zeros((0, 3))
    return PushConstraintSet(frame, eps, z, z, z, z3, z3, f3, f3, np.zeros(0),
                             np.zeros((0, 2)), (), 0, skipped)


def _normalise_label(label, first_is_lower):
    side = {"a": "lower" if first_is_lower else "upper", "b": "upper" if first_is_lower else "lower"}
    if label[0] == "x":
        ea, eb = label[1], label[2]
        return ("cross", ea, eb) if first_is_lower else ("cross", eb, ea)
    return (side[label[0]], label[1])


def build_constraints(mesh: Mesh, direction, config: PushConfig = PushConfig()) -> PushConstraintSet:
    """Ordering constraints for moving ``mesh`` along ``direction``.

    Raises ``OrderingViolated`` when an overlapping pair has corners ordered
    both ways, i.e. the input already interpenetrates.
    """
    cfg = config.resolved(mesh)
    frame = orthonormal_basis(direction)
    proj = project_mesh(mesh, frame)
    faces = mesh.faces
    tri2d = proj.coords2d[faces]
    e1 = tri2d[:, 1] - tri2d[:, 0]
    e2 = tri2d[:, 2] - tri2d[:, 0]
    area2d = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    degenerate = area2d < cfg.area_tol

    pairs = broad_phase_pairs(proj, faces)
    skip = degenerate[pairs[:, 0]] | degenerate[pairs[:, 1]]
    skipped = int(skip.sum())
    pairs = pairs[~skip]
    pairs = pairs[~separated_triangles_2d(tri2d[pairs[:, 0]], tri2d[pairs[:, 1]])]
    poly_pair, poly_pts, poly_labels, poly_corner = [], [], [], []
    tri_list = tri2d.tolist()
    for fa, fb in pairs.tolist():
        poly = clip_triangles(tri_list[fa], tri_list[fb], cfg.area_tol)
        if poly.empty:
            continue
        k = len(poly)
        poly_pair.extend([(fa, fb)] * k)
        poly_pts.append(poly.corners)
        poly_labels.extend(poly.labels)
        poly_corner.extend(range(k))
    if not poly_pts:
        return _empty_constraints(frame, cfg.epsilon, skipped)

    pair = np.array(poly_pair, dtype=np.int64)
    pts = np.concatenate(poly_pts)
    corner = np.array(poly_corner, dtype=np.int64)
    beta_a = barycentric_batch(pts, tri2d[pair[:, 0]])
    beta_b = barycentric_batch(pts, tri2d[pair[:, 1]])
    depth_a = np.einsum("rk,rk->r", beta_a, proj.depth[faces[pair[:, 0]]])
    depth_b = np.einsum("rk,rk->r", beta_b, proj.depth[faces[pair[:, 1]]])
    gap = depth_b - depth_a

    # one ordering decision per pair, from all of its corners
    starts = np.flatnonzero(corner == 0)
    pair_id = np.cumsum(corner == 0) - 1
    tol = cfg.ordering_tol
    pos = np.bincount(pair_id, weights=gap > tol, minlength=len(starts)) > 0
    neg = np.bincount(pair_id, weights=gap < -tol, minlength=len(starts)) > 0
    mixed = pos & neg
    if np.any(mixed):
        fa, fb = pair[starts[np.argmax(mixed)]]
        raise OrderingViolated(
            f"faces {fa} and {fb} are ordered both ways along the motion direction; "
            "the input mesh already intersects"
        )
    total = np.bincount(pair_id, weights=gap, minlength=len(starts))
    a_lower = np.where(pos | neg, pos, total >= 0)[pair_id]

    face_lower = np.where(a_lower, pair[:, 0], pair[:, 1])
    face_upper = np.where(a_lower, pair[:, 1], pair[:, 0])
    beta_lower = np.where(a_lower[:, None], beta_a, beta_b)
    beta_upper = np.where(a_lower[:, None], beta_b, beta_a)
    rhs = np.where(a_lower, depth_a - depth_b, depth_b - depth_a) + cfg.epsilon
    labels = [_normalise_label(lab, bool(lo)) for lab, lo in zip(poly_labels, a_lower)]

    order = np.lexsort((corner, face_upper, face_lower))
    return PushConstraintSet(
        frame=frame,
        epsilon=cfg.epsilon,
        face_lower=face_lower[order],
        face_upper=face_upper[order],
        corner=corner[order],
        lower_vertices=faces[face_lower[order]],
        upper_vertices=faces[face_upper[order]],
        beta_lower=beta_lower[order],
        beta_upper=beta_upper[order],
        rhs=rhs[order],
        points2d=pts[order],
        labels=tuple(labels[i] for i in order),
        pair_count=len(starts),
        skipped_degenerate=skipped,
    )


@dataclass(frozen=True, eq=False)
class StepResult:
    mesh_in: Mesh
    mesh_out: Mesh
    d: np.ndarray
    step: DeformStep
    constraints: PushConstraintSet
    lp: LinearProgram = field(repr=False)
    lp_solution: LpSolution = field(repr=False)

    @property
    def u_hat(self) -> np.ndarray:
        return self.constraints.frame.u_hat


def push_step(mesh: Mesh, step: DeformStep, config: PushConfig = PushConfig()) -> StepResult:
    """Move ``mesh`` along ``step.direction`` by the smallest distances ``>= d_min`` that keep faces ordered."""
    if len(step.d_min) != mesh.n_vertices:
        raise ValueError(f"d_min has {len(step.d_min)} entries for {mesh.n_vertices} vertices")
    cs = build_constraints(mesh, step.direction, config)
    lp = cs.to_lp(step.d_min)
    sol = solve_lp(lp, config.max_lp_iterations, config.lp_pricing)
    if not sol.optimal:
        raise PushInfeasible(f"pushing LP is {sol.status.value}", sol.status)
    u = cs.frame.u_hat
    out = Mesh(mesh.vertices + sol.d[:, None] * u, mesh.faces, mesh.face_colors)
    if config.verify_output:
        count, _ = count_intersecting_faces(out)
        if count:
            raise VerificationFailed(f"{count} faces intersect after the step")
    return StepResult(mesh, out, sol.d, step, cs, lp, sol)


# --- backward -------------------------------------------------------------------------------

class StepGradient(NamedTuple):
    d_min: np.ndarray  # (N_V,)
    vertices: np.ndarray  # (N_V, 3) wrt the step's input vertices
    direction: np.ndarray  # (3,) wrt u_hat, tangential part only when rows are active
    d: np.ndarray  # (N_V,) total gradient reaching d
    condition_number: float


def _plane_gradient(x, h):
    """2D gradient of the affine height field through ``(x[k], h[k])``."""
    m = np.array([x[1] - x[0], x[2] - x[0]])
    return np.linalg.solve(m, np.array([h[1] - h[0], h[2] - h[0]]))


def _perp_grad(u, w):
    # d cross(u, w) / du for cross(u, w) = u_x w_y - u_y w_x
    return np.array([w[1], -w[0]])


def _row_geometry_grad(label, p, x_lo, h_lo, b_lo, x_up, h_up, b_up):
    """Gradient of ``H = Z_upper(p) - Z_lower(p)`` wrt 2D positions and heights of both faces' vertices.

    ``p`` is the overlap corner, itself a function of the vertex positions
    as described by ``label``. Returns ``(gx_lo, gh_lo, gx_up, gh_up)``.
    """
    g_lo = _plane_gradient(x_lo, h_lo)
    g_up = _plane_gradient(x_up, h_up)
    gh_lo = -b_lo.copy()
    gh_up = b_up.copy()
    # moving a vertex in-plane at fixed height tilts its plane: dZ(p) = -beta_m g . dx_m
    gx_lo = b_lo[:, None] * g_lo[None, :]
    gx_up = -b_up[:, None] * g_up[None, :]
    w = g_up - g_lo  # dH/dp
    kind = label[0]
    if kind == "lower":
        gx_lo[label[1]] += w
    elif kind == "upper":
        gx_up[label[1]] += w
    else:
        (i0, i1), (j0, j1) = label[1], label[2]
        p0, p1, q0, q1 = x_lo[i0], x_lo[i1], x_up[j0], x_up[j1]
        ua, ub = p1 - p0, q1 - q0
        jac = np.array([[-ua[1], ua[0]], [-ub[1], ub[0]]])
        mu = np.linalg.solve(jac.T, w)
        # dH = -mu . dF, F1 = cross(p1 - p0, p - p0), F2 = cross(q1 - q0, p - q0)
        da1 = _perp_grad(ua, p - p0)
        db1 = _perp_grad(ub, p - q0)
        gx_lo[i1] -= mu[0] * da1
        gx_lo[i0] -= mu[0] * (-da1 - np.array([-ua[1], ua[0]]))
        gx_up[j1] -= mu[1] * db1
        gx_up[j0] -= mu[1] * (-db1 - np.array([-ub[1], ub[0]]))
    return gx_lo, gh_lo, gx_up, gh_up


def push_step_backward(result: StepResult, grad_vertices, grad_d=None, geometry: str = "exact") -> StepGradient:
    """Reverse-mode pass through one pushing step.

    ``grad_vertices`` is dL/d(mesh_out.vertices); ``grad_d`` optionally adds a
    direct gradient on ``d``. Gradients reach ``d_min`` through active bound
    rows and the input vertices both directly and through active ordering
    rows. With ``geometry="frozen"`` the barycentric coordinates of overlap
    corners are held fixed, so only vertex depths feed the ordering rows;
    ``"exact"`` also differentiates the corner positions in the projection
    plane. The overlap topology and active set are treated as fixed either
    way, and so is epsilon: pass it explicitly in ``PushConfig`` when the
    derived default would move with the mesh bounding box. The direction gradient is exact only for ``"exact"``; its component
    along ``u_hat`` is meaningless for active rows since they depend on
    ``u_hat`` only up to scale.
    """
    if geometry not in ("exact", "frozen"):
        raise ValueError(f"geometry must be 'exact' or 'frozen', got {geometry!r}")
    g_out = np.asarray(grad_vertices, dtype=np.float64).reshape(-1, 3)
    u = result.u_hat
    g_d = g_out @ u
    if grad_d is not None:
        g_d = g_d + np.asarray(grad_d, dtype=np.float64)
    lpg = lp_backward(result.lp, result.lp_solution, g_d)
    g_vin = g_out.copy()
    g_dir = result.d @ g_out

    cs = result.constraints
    active = np.flatnonzero(lpg.rhs)
    if len(active):
        frame = cs.frame
        verts = result.mesh_in.vertices
        lam = lpg.rhs[active]
        if geometry == "frozen":
            g_depth = np.zeros(len(verts))
            np.add.at(g_depth, cs.lower_vertices[active].ravel(), (lam[:, None] * cs.beta_lower[active]).ravel())
            np.add.at(g_depth, cs.upper_vertices[active].ravel(), (-lam[:, None] * cs.beta_upper[active]).ravel())
            g_vin += g_depth[:, None] * u
        else:
            xy = np.stack([verts @ frame.e1, verts @ frame.e2], axis=1)
            h = verts @ u + result.d
            g_xy = np.zeros_like(xy)
            g_h = np.zeros(len(verts))
            for r, lr in zip(active.tolist(), lam.tolist()):
                lo, up = cs.lower_vertices[r], cs.upper_vertices[r]
                gx_lo, gh_lo, gx_up, gh_up = _row_geometry_grad(
                    cs.labels[r], cs.points2d[r], xy[lo], h[lo], cs.beta_lower[r],
                    xy[up], h[up], cs.beta_upper[r],
                )
                # the row is coef.d - rhs = H - eps with d held fixed: dL = -lambda dH
                g_xy[lo] -= lr * gx_lo
                g_xy[up] -= lr * gx_up
                g_h[lo] -= lr * gh_lo
                g_h[up] -= lr * gh_up
            g_vin += g_xy[:, :1] * frame.e1 + g_xy[:, 1:] * frame.e2 + g_h[:, None] * u
        # rows are invariant under a joint rotation of the vertices and u_hat,
        # which pins down their gradient wrt u_hat from the vertex gradient
        g_rows = g_vin - g_out
        g_dir = g_dir + np.cross(u, np.cross(verts, g_rows).sum(axis=0))
    return StepGradient(lpg.lower_bounds, g_vin, g_dir, g_d, lpg.condition_number)


# --- sequences --------------------------------------------------------------------------------

def deform(mesh: Mesh, steps, config: PushConfig = PushConfig()) -> tuple[Mesh, list[StepResult]]:
    """Apply ``steps`` in order; returns the final mesh and the tape of step results."""
    tape: list[StepResult] = []
    current = mesh
    for i, step in enumerate(steps):
        try:
            res = push_step(current, step, config)
        except StepError as exc:
            exc.step_index = i
            exc.args = (f"step {i}: {exc.args[0] if exc.args else ''}",) + exc.args[1:]
            raise
        tape.append(res)
        current = res.mesh_out
    return current, tape


class DeformGradient(NamedTuple):
    steps: list  # StepGradient per step, in forward order
    vertices: np.ndarray  # wrt the initial mesh vertices


def deform_backward(tape, grad_final_vertices, geometry: str = "exact") -> DeformGradient:
    g = np.asarray(grad_final_vertices, dtype=np.float64)
    grads = []
    for res in reversed(tape):
        sg = push_step_backward(res, g, geometry=geometry)
        grads.append(sg)
        g = sg.vertices
    return DeformGradient(grads[::-1], g)
