"""Convex world model: obstacles, scenes, half-plane sets and ray sampling.

Frame convention: fixed right-handed inertial axes (X, Y, Z), Z up, origin
at the ground station. All lengths are meters. Everything here is a pure
function of its inputs and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError

NO_RETURN = math.inf


class GeometryError(ValueError):
    """Invalid argument to a geometry primitive."""


class EmptyPolyhedronError(GeometryError):
    """Operation requires a nonempty polyhedron."""


def _vec(x, dim, name):
    v = np.asarray(x, dtype=float)
    if v.shape != (dim,):
        raise GeometryError(f"{name} must have shape ({dim},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise GeometryError(f"{name} must be finite")
    return v


def unit(v):
    """Normalize a vector, rejecting zero length."""
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n < 1e-15:
        raise GeometryError("zero-length vector has no direction")
    return v / n


def _lp_extreme(normals, offsets, direction):
    """max direction.x over {x: normals x <= offsets}; (value, status)."""
    res = linprog(-direction, A_ub=normals, b_ub=offsets,
                  bounds=[(None, None)] * normals.shape[1], method="highs")
    return res


@dataclass(frozen=True)
class ConvexObstacle:
    """Convex polytope {x : normals @ x <= offsets}, unit-norm rows.

    Bounded and nonempty unless ``unbounded_ok`` was set at construction
    (used for the ground half-space only). ``aabb_min``/``aabb_max`` give an
    axis-aligned bounding box for cheap rejection tests.
    """

    normals: np.ndarray
    offsets: np.ndarray
    aabb_min: np.ndarray
    aabb_max: np.ndarray
    unbounded_ok: bool = False

    @staticmethod
    def from_halfspaces(normals, offsets, unbounded_ok=False) -> "ConvexObstacle":
        A = np.atleast_2d(np.asarray(normals, dtype=float))
        b = np.asarray(offsets, dtype=float).ravel()
        if A.shape[0] != b.shape[0] or A.shape[1] != 3:
            raise GeometryError("halfspace arrays must be (p,3) and (p,)")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise GeometryError("halfspace data must be finite")
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms < 1e-12):
            raise GeometryError("zero-norm halfspace normal")
        A = A / norms[:, None]
        b = b / norms
        if unbounded_ok:
            lo = np.full(3, -np.inf)
            hi = np.full(3, np.inf)
            return ConvexObstacle(A, b, lo, hi, unbounded_ok=True)
        lo = np.empty(3)
        hi = np.empty(3)
        for k in range(3):
            e = np.zeros(3)
            e[k] = 1.0
            res = _lp_extreme(A, b, e)
            if res.status == 2:
                raise EmptyPolyhedronError("halfspace set is empty")
            if res.status == 3:
                raise GeometryError("halfspace set is unbounded")
            if res.status != 0:
                raise GeometryError(f"LP failed while bounding polytope: {res.message}")
            hi[k] = -res.fun
            res = _lp_extreme(A, b, -e)
            if res.status != 0:
                raise GeometryError("halfspace set is unbounded or empty")
            lo[k] = res.fun
        return ConvexObstacle(A, b, lo, hi)

    @staticmethod
    def from_vertices(points) -> "ConvexObstacle":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[0] < 4 or pts.shape[1] != 3:
            raise GeometryError("need at least 4 points of shape (n,3)")
        try:
            hull = ConvexHull(pts)
        except QhullError as exc:
            raise GeometryError(f"degenerate vertex set: {exc}") from exc
        # qhull: eq[:, :3] x + eq[:, 3] <= 0, rows unit-normalized
        A = hull.equations[:, :3].copy()
        b = -hull.equations[:, 3].copy()
        return ConvexObstacle(A, b, pts.min(axis=0), pts.max(axis=0))

    @staticmethod
    def box(x_range, y_range, z_range) -> "ConvexObstacle":
        (x0, x1), (y0, y1), (z0, z1) = x_range, y_range, z_range
        if not (x0 < x1 and y0 < y1 and z0 < z1):
            raise GeometryError("box ranges must be increasing")
        A = np.vstack([np.eye(3), -np.eye(3)])
        b = np.array([x1, y1, z1, -x0, -y0, -z0], dtype=float)
        return ConvexObstacle(A, b, np.array([x0, y0, z0], float),
                              np.array([x1, y1, z1], float))

    def contains(self, points) -> np.ndarray:
        """Boolean membership for points of shape (k,3); boundary counts."""
        P = np.atleast_2d(points)
        out = np.zeros(P.shape[0], dtype=bool)
        if not self.unbounded_ok:
            near = np.all((P >= self.aabb_min - 1e-9) & (P <= self.aabb_max + 1e-9),
                          axis=1)
        else:
            near = np.ones(P.shape[0], dtype=bool)
        idx = np.nonzero(near)[0]
        if idx.size:
            out[idx] = np.all(P[idx] @ self.normals.T <= self.offsets + 1e-12, axis=1)
        return out

    def vertices(self) -> np.ndarray:
        """Enumerate vertices via a Chebyshev-center seeded intersection."""
        if self.unbounded_ok:
            raise GeometryError("unbounded obstacle has no vertex representation")
        n = self.normals.shape[1]
        c = np.zeros(n + 1)
        c[-1] = -1.0
        A_ub = np.hstack([self.normals, np.ones((self.normals.shape[0], 1))])
        res = linprog(c, A_ub=A_ub, b_ub=self.offsets,
                      bounds=[(None, None)] * n + [(0, None)], method="highs")
        if res.status != 0 or res.x[-1] <= 1e-9:
            raise EmptyPolyhedronError("polytope has no interior point")
        interior = res.x[:n]
        hs = HalfspaceIntersection(np.hstack([self.normals, -self.offsets[:, None]]),
                                   interior)
        return hs.intersections

    def face_slacks(self, points) -> np.ndarray:
        """offsets - normals @ p per face; >= 0 everywhere iff inside."""
        P = np.atleast_2d(points)
        return self.offsets[None, :] - P @ self.normals.T


@dataclass(frozen=True)
class Scene:
    """A static set of convex obstacles, optionally with the ground Z<=0."""

    obstacles: tuple = ()
    ground: bool = True

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    def contains(self, points) -> np.ndarray:
        P = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.zeros(P.shape[0], dtype=bool)
        if self.ground:
            inside |= P[:, 2] <= 0.0
        for ob in self.obstacles:
            todo = ~inside
            if not todo.any():
                break
            inside[todo] |= ob.contains(P[todo])
        return inside


def point_in_scene(p, scene: Scene) -> bool:
    """True iff p lies inside any obstacle (or on/below ground when on)."""
    return bool(scene.contains(_vec(p, 3, "p"))[0])


def ray_cast(origin, direction, scene: Scene, max_range: float, step: float) -> float:
    """Sampled-membership ray cast.

    Walks sample points at multiples of ``step`` from ``origin`` along the
    unit ``direction`` and returns the distance of the first sample inside
    any obstacle, or ``inf`` (no-return) if none within ``max_range``. The
    test is one-sided: the reported distance over-estimates the true
    boundary distance by at most ``step``.
    """
    d = _vec(direction, 3, "direction")
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise GeometryError("direction must be unit norm")
    if step <= 0.0:
        raise GeometryError("step must be positive")
    if max_range <= 0.0:
        raise GeometryError("max_range must be positive")
    return float(raycast_fan(_vec(origin, 3, "origin"), d[None, :], scene,
                             max_range, step)[0])


def raycast_fan(origin, directions, scene: Scene, max_range: float,
                step: float) -> np.ndarray:
    """Vectorized ray_cast for a (m,3) bundle of unit directions."""
    o = _vec(origin, 3, "origin")
    D = np.atleast_2d(np.asarray(directions, dtype=float))
    if step <= 0.0 or max_range <= 0.0:
        raise GeometryError("step and max_range must be positive")
    n_samples = int(math.floor(max_range / step + 1e-9))
    if n_samples == 0:
        return np.full(D.shape[0], NO_RETURN)
    t = (np.arange(n_samples) + 1.0) * step
    pts = o[None, None, :] + t[None, :, None] * D[:, None, :]
    flat = pts.reshape(-1, 3)
    inside = scene.contains(flat).reshape(D.shape[0], n_samples)
    out = np.full(D.shape[0], NO_RETURN)
    any_hit = inside.any(axis=1)
    first = np.argmax(inside[any_hit], axis=1)
    out[any_hit] = t[first]
    return out


@dataclass(frozen=True)
class HalfplaneSet:
    """2D polyhedron {x in R^2 : A x <= b} with unit-normalized rows.

    Normalization makes row slacks metric distances, so solver tolerances
    read in meters. Zero rows define the whole plane.
    """

    A: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    b: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float)).reshape(-1, 2)
        b = np.asarray(self.b, dtype=float).ravel()
        if A.shape[0] != b.shape[0]:
            raise GeometryError("A and b row counts differ")
        if A.shape[0]:
            norms = np.linalg.norm(A, axis=1)
            if np.any(norms < 1e-12):
                raise GeometryError("zero-norm half-plane row")
            A = A / norms[:, None]
            b = b / norms
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def contains(self, points, tol: float = 1e-9) -> np.ndarray:
        P = np.atleast_2d(np.asarray(points, dtype=float))
        if self.n_rows == 0:
            return np.ones(P.shape[0], dtype=bool)
        return np.all(P @ self.A.T <= self.b + tol, axis=1)


def distance_to_polyhedron(p, halfplanes: HalfplaneSet) -> float:
    """Euclidean distance from a 2D point to {x: A x <= b} (0 if inside)."""
    from . import qpsolve

    q = _vec(p, 2, "p")
    if halfplanes.n_rows == 0:
        return 0.0
    res = qpsolve.project(q, halfplanes.A, halfplanes.b)
    if res.status != "optimal":
        raise EmptyPolyhedronError("half-plane set is empty")
    return float(np.linalg.norm(res.x - q))


def _aabb_distance(points, lo, hi) -> np.ndarray:
    """Lower bound on the distance from points to an AABB (0 inside)."""
    P = np.atleast_2d(points)
    d = np.maximum(np.maximum(lo[None, :] - P, P - hi[None, :]), 0.0)
    return np.linalg.norm(d, axis=1)


def signed_scene_distance(points, scene: Scene) -> np.ndarray:
    """Signed distance to the nearest scene surface per point.

    Positive outside everything, negative (penetration depth) inside; the
    ground plane contributes the Z coordinate directly. Returns +inf for an
    empty scene with ground off.
    """
    from . import qpsolve

    P = np.atleast_2d(np.asarray(points, dtype=float))
    best = np.full(P.shape[0], np.inf)
    if scene.ground:
        best = np.minimum(best, P[:, 2])
    for ob in scene.obstacles:
        if ob.unbounded_ok:
            slack = ob.face_slacks(P)
            best = np.minimum(best, slack.min(axis=1))
            continue
        slack = ob.face_slacks(P)
        inside = np.all(slack >= 0.0, axis=1)
        best[inside] = np.minimum(best[inside], -slack[inside].min(axis=1))
        outside = np.nonzero(~inside)[0]
        if outside.size == 0:
            continue
        bound = _aabb_distance(P[outside], ob.aabb_min, ob.aabb_max)
        for i, lb in zip(outside, bound):
            if lb >= best[i]:
                continue
            res = qpsolve.project(P[i], ob.normals, ob.offsets)
            if res.status == "optimal":
                best[i] = min(best[i], float(np.linalg.norm(res.x - P[i])))
    return best
