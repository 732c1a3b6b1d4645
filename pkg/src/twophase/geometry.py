"""Convex bodies and point clouds in two and three dimensions.

Bodies are stored by their vertices.  Halfspace data, the largest inscribed
ball and the circumradius about its center are computed lazily and cached.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError, cKDTree

from .errors import DomainError, EmptyInteriorError

__all__ = [
    "PointCloud",
    "ConvexBody",
    "as_points",
    "hausdorff_distance",
    "erode",
    "inner_approx_constant",
    "dilation_cover_check",
    "convex_hull",
    "body_measure",
    "distance_to_body",
    "random_convex_polygon",
    "random_convex_polytope",
]


def as_points(points) -> np.ndarray:
    """Return ``points`` as a float array of shape (m, n) with n in {2, 3}."""
    if isinstance(points, PointCloud):
        return points.points
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        raise DomainError(f"expected points of shape (m, 2) or (m, 3), got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """A finite, nonempty sample of points taken at one instant."""

    points: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] not in (2, 3):
            raise DomainError("a point cloud needs at least one point in 2-D or 3-D")
        if not np.all(np.isfinite(pts)):
            raise DomainError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class ConvexBody:
    """Convex polygon (counterclockwise) or convex polytope given by vertices.

    ``lower_dimensional`` marks hulls of collinear or coplanar input; such
    bodies have zero measure and no inscribed ball.
    """

    vertices: np.ndarray
    lower_dimensional: bool = False

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] not in (2, 3):
            raise DomainError(f"vertices must have shape (m, 2) or (m, 3), got {v.shape}")
        object.__setattr__(self, "vertices", v)

    # -- constructors -------------------------------------------------
    @classmethod
    def box(cls, lo, hi) -> "ConvexBody":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape[0] == 2:
            verts = [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]
            return cls(np.array(verts))
        corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(3, -1).T
        return convex_hull(corners)

    @classmethod
    def disc(cls, center=(0.0, 0.0), radius: float = 1.0, n_vertices: int = 512) -> "ConvexBody":
        theta = 2.0 * np.pi * np.arange(n_vertices) / n_vertices
        c = np.asarray(center, dtype=float)
        return cls(c + radius * np.column_stack([np.cos(theta), np.sin(theta)]))

    @classmethod
    def polygon(cls, vertices) -> "ConvexBody":
        """Hull of the given points, so that vertex order is normalized."""
        return convex_hull(vertices)

    # -- basic data ---------------------------------------------------
    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @cached_property
    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit outward normals ``A`` and offsets ``b`` with ``A x + b <= 0`` inside."""
        if self.lower_dimensional:
            raise DomainError("lower-dimensional body has no halfspace description")
        v = self.vertices
        if self.dim == 2:
            edges = np.roll(v, -1, axis=0) - v
            normals = np.column_stack([edges[:, 1], -edges[:, 0]])
            lengths = np.linalg.norm(normals, axis=1)
            keep = lengths > 0
            normals = normals[keep] / lengths[keep, None]
            offsets = -np.einsum("ij,ij->i", normals, v[keep])
            return normals, offsets
        eq = self._hull3d.equations
        return eq[:, :-1].copy(), eq[:, -1].copy()

    @cached_property
    def _chebyshev(self) -> tuple[np.ndarray, float]:
        if self.lower_dimensional:
            raise DomainError("lower-dimensional body has no inscribed ball")
        A, b = self.halfspaces
        n = self.dim
        cost = np.zeros(n + 1)
        cost[-1] = -1.0
        a_ub = np.hstack([A, np.ones((A.shape[0], 1))])
        res = linprog(cost, A_ub=a_ub, b_ub=-b, bounds=[(None, None)] * n + [(0, None)], method="highs")
        if res.status != 0:
            raise DomainError(f"inscribed-ball program failed: {res.message}")
        return np.asarray(res.x[:n]), float(res.x[n])

    @property
    def incenter(self) -> np.ndarray:
        return self._chebyshev[0]

    @property
    def inradius(self) -> float:
        return self._chebyshev[1]

    @cached_property
    def circumradius(self) -> float:
        """Largest distance from the incenter to a vertex."""
        return float(np.max(np.linalg.norm(self.vertices - self.incenter, axis=1)))

    @cached_property
    def faces(self) -> np.ndarray:
        """Boundary simplices as vertex-index arrays (edges in 2-D, triangles in 3-D)."""
        m = self.vertices.shape[0]
        if self.dim == 2:
            idx = np.arange(m)
            return np.column_stack([idx, np.roll(idx, -1)])
        return self._hull3d.simplices

    @cached_property
    def _hull3d(self) -> ConvexHull:
        return ConvexHull(self.vertices)

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        """Boolean membership of each point (boundary included up to ``tol``)."""
        pts = as_points(points)
        A, b = self.halfspaces
        # chunked so that bodies with many faces do not build huge temporaries
        step = max(1, 2_000_000 // max(A.shape[0], 1))
        out = np.empty(pts.shape[0], dtype=bool)
        for i in range(0, pts.shape[0], step):
            out[i:i + step] = np.all(pts[i:i + step] @ A.T + b <= tol, axis=1)
        return out

    def boundary_samples(self, n_samples: int = 1000, rng: np.random.Generator | None = None) -> np.ndarray:
        """Points on the boundary: all vertices plus an arc-length (2-D) or area-weighted (3-D) grid."""
        v = self.vertices
        if self.dim == 2:
            edges = np.roll(v, -1, axis=0) - v
            lengths = np.linalg.norm(edges, axis=1)
            cum = np.concatenate([[0.0], np.cumsum(lengths)])
            s = np.linspace(0.0, cum[-1], n_samples, endpoint=False)
            k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(lengths) - 1)
            frac = (s - cum[k]) / np.where(lengths[k] > 0, lengths[k], 1.0)
            pts = v[k] + frac[:, None] * edges[k]
            return np.vstack([v, pts])
        rng = rng if rng is not None else np.random.default_rng(0)
        tri = self.vertices[self.faces]
        areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
        pick = rng.choice(len(tri), size=n_samples, p=areas / areas.sum())
        r1 = np.sqrt(rng.random(n_samples))
        r2 = rng.random(n_samples)
        t = tri[pick]
        pts = (1 - r1)[:, None] * t[:, 0] + (r1 * (1 - r2))[:, None] * t[:, 1] + (r1 * r2)[:, None] * t[:, 2]
        return np.vstack([v, pts])


# ---------------------------------------------------------------------------
# distances


def hausdorff_distance(a, b) -> float:
    """Symmetric Hausdorff distance between two finite point sets."""
    pa = as_points(a)
    pb = as_points(b)
    if pa.shape[0] == 0 or pb.shape[0] == 0:
        raise DomainError("Hausdorff distance of an empty cloud")
    if pa.shape[1] != pb.shape[1]:
        raise DomainError("clouds have different dimensions")
    d_ab = cKDTree(pb).query(pa)[0].max()
    d_ba = cKDTree(pa).query(pb)[0].max()
    return float(max(d_ab, d_ba))


def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise distance from points ``p`` to segments ``[a, b]`` (all shape (m, n))."""
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    s = np.einsum("ij,ij->i", p - a, ab) / np.where(denom > 0, denom, 1.0)
    s = np.clip(s, 0.0, 1.0)
    return np.linalg.norm(p - (a + s[:, None] * ab), axis=1)


def _triangle_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Row-wise distance from points ``p`` to filled triangles ``(a, b, c)`` in 3-D."""
    normal = np.cross(b - a, c - a)
    nn = np.linalg.norm(normal, axis=1)
    unit = normal / np.where(nn > 0, nn, 1.0)[:, None]
    height = np.einsum("ij,ij->i", p - a, unit)
    foot = p - height[:, None] * unit
    inside = nn > 0
    for u, w in ((a, b), (b, c), (c, a)):
        inside &= np.einsum("ij,ij->i", foot - u, np.cross(w - u, unit)) <= 1e-14
    edge = np.minimum(np.minimum(_segment_distance(p, a, b), _segment_distance(p, b, c)),
                      _segment_distance(p, c, a))
    return np.where(inside, np.abs(height), edge)


def distance_to_body(body: ConvexBody, points) -> np.ndarray:
    """Euclidean distance from each point to the (filled) body; zero inside.

    For an exterior point the nearest boundary point lies on a facet whose
    supporting halfspace the point violates, so only those pairs are tested.
    """
    pts = as_points(points)
    v = body.vertices
    faces = body.faces
    if body.dim == 2:
        e = v[faces[:, 1]] - v[faces[:, 0]]
        normals = np.column_stack([e[:, 1], -e[:, 0]])
        offsets = -np.einsum("ij,ij->i", normals, v[faces[:, 0]])
    else:
        normals, offsets = body.halfspaces
    side = pts @ normals.T + offsets
    out = np.zeros(pts.shape[0])
    ip, jf = np.nonzero(side > 0)
    if ip.size == 0:
        return out
    q = pts[ip]
    f = faces[jf]
    if body.dim == 2:
        d = _segment_distance(q, v[f[:, 0]], v[f[:, 1]])
    else:
        d = _triangle_distance(q, v[f[:, 0]], v[f[:, 1]], v[f[:, 2]])
    best = np.full(pts.shape[0], np.inf)
    np.minimum.at(best, ip, d)
    out[np.isfinite(best)] = best[np.isfinite(best)]
    return out


# ---------------------------------------------------------------------------
# hulls and measures


def convex_hull(points) -> ConvexBody:
    """Smallest convex body containing ``points``.

    Collinear (2-D) or coplanar (3-D) input yields a body flagged
    ``lower_dimensional`` whose vertices are the extreme input points.
    """
    pts = as_points(points)
    n = pts.shape[1]
    centered = pts - pts.mean(axis=0)
    scale = max(float(np.abs(centered).max()), 1e-300)
    rank = np.linalg.matrix_rank(centered / scale, tol=1e-10) if pts.shape[0] > 1 else 0
    if pts.shape[0] < n + 1 or rank < n:
        return _degenerate_hull(pts, rank)
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return _degenerate_hull(pts, rank)
    return ConvexBody(pts[hull.vertices])


def _degenerate_hull(pts: np.ndarray, rank: int) -> ConvexBody:
    if rank == 0:
        return ConvexBody(pts[:1].copy(), lower_dimensional=True)
    centered = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    if rank == 1:
        s = centered @ vt[0]
        return ConvexBody(pts[[int(np.argmin(s)), int(np.argmax(s))]], lower_dimensional=True)
    coords = centered @ vt[:2].T
    try:
        idx = ConvexHull(coords).vertices
    except QhullError:
        idx = np.unique([int(np.argmin(coords[:, 0])), int(np.argmax(coords[:, 0]))])
    return ConvexBody(pts[idx], lower_dimensional=True)


def body_measure(body: ConvexBody) -> float:
    """Area (2-D) or volume (3-D); zero for lower-dimensional bodies."""
    if body.lower_dimensional:
        return 0.0
    v = body.vertices
    if body.dim == 2:
        x, y = v[:, 0], v[:, 1]
        return float(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))
    return float(ConvexHull(v).volume)


# ---------------------------------------------------------------------------
# erosion and the inner-approximation estimate


def erode(body: ConvexBody, eps: float) -> ConvexBody:
    """Points of ``body`` at distance at least ``eps`` from its complement."""
    if body.lower_dimensional:
        raise EmptyInteriorError("cannot erode a lower-dimensional body")
    if not eps > 0:
        raise DomainError("erosion depth must be positive")
    if eps >= body.inradius:
        raise EmptyInteriorError(f"erosion depth {eps} is not below the inradius {body.inradius}")
    A, b = body.halfspaces
    shifted = np.hstack([A, (b + eps)[:, None]])
    inter = HalfspaceIntersection(shifted, body.incenter)
    return convex_hull(inter.intersections)


def inner_approx_constant(body: ConvexBody) -> float:
    """Return ``sqrt(2) * R / delta`` with R measured from the incenter."""
    if body.lower_dimensional or body.inradius <= 0:
        raise DomainError("inner-approximation constant needs a body with interior")
    return float(np.sqrt(2.0) * body.circumradius / body.inradius)


def dilation_cover_check(body: ConvexBody, eps: float, k: float, n_samples: int = 1000,
                         rel_tol: float = 1e-12) -> bool:
    """True iff every sampled point of ``body`` lies within ``k*eps`` of the eroded body.

    Vertices are always among the samples; since the distance to a convex
    set is convex, the maximum over the body is attained at a vertex.
    """
    inner = erode(body, eps)
    pts = body.boundary_samples(n_samples)
    d = distance_to_body(inner, pts)
    scale = rel_tol * max(1.0, body.circumradius)
    return bool(np.all(d <= k * eps + scale))


# ---------------------------------------------------------------------------
# random bodies for property tests


def random_convex_polygon(rng: np.random.Generator, n_points: int = 12) -> ConvexBody:
    """Hull of random points drawn in a randomly stretched and rotated disc."""
    while True:
        r = np.sqrt(rng.random(n_points))
        th = 2 * np.pi * rng.random(n_points)
        pts = np.column_stack([r * np.cos(th), r * np.sin(th)])
        stretch = np.diag(rng.uniform(0.2, 2.0, size=2))
        ang = rng.uniform(0, 2 * np.pi)
        rot = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
        pts = pts @ stretch @ rot.T + rng.normal(size=2)
        body = convex_hull(pts)
        if not body.lower_dimensional and body.inradius > 1e-3:
            return body


def random_convex_polytope(rng: np.random.Generator, n_points: int = 20) -> ConvexBody:
    """Hull of random points in a randomly stretched 3-D ball."""
    while True:
        g = rng.normal(size=(n_points, 3))
        g /= np.linalg.norm(g, axis=1)[:, None]
        pts = g * rng.random(n_points)[:, None] ** (1 / 3)
        pts = pts @ np.diag(rng.uniform(0.3, 2.0, size=3)) + rng.normal(size=3)
        body = convex_hull(pts)
        if not body.lower_dimensional and body.inradius > 1e-3:
            return body
