"""Geometric fidelity metrics between a test mesh and a reference mesh.

Everything here works in millimetres on float64 arrays.  Distances are
always evaluated with :func:`point_distance` so that results coming from
the kD-tree path and from brute force agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DegenerateConfiguration,
    EmptyPointSet,
    EmptyResult,
    LengthMismatch,
    NameMismatch,
    NoFaces,
)
from .meshio import LandmarkSet, TriangleMesh

__all__ = [
    "SpatialIndex",
    "DistanceStats",
    "DeviationField",
    "SimilarityTransform",
    "point_distance",
    "build_spatial_index",
    "nearest_neighbor",
    "point_to_point_stats",
    "point_to_triangle_distance",
    "points_to_triangles_distance",
    "surface_deviation",
    "colorize_deviation",
    "crop_sphere",
    "fit_similarity",
    "similarity_align",
    "apply_transform",
]


def point_distance(a, b) -> np.ndarray:
    """Euclidean distance along the last axis, ((dx*dx + dy*dy) + dz*dz) ** 0.5."""
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2])


def _as_points(points) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    if p.ndim == 1 and p.size == 3:
        p = p.reshape(1, 3)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"expected (n, 3) points, got shape {p.shape}")
    return p


# --------------------------------------------------------------------------
# spatial index

class SpatialIndex:
    """Balanced kD-tree over a 3D point set with exact, tie-stable queries.

    The tree only proposes candidates; the reported neighbour is the
    candidate with the smallest exact distance, ties going to the lowest
    point index.  Immutable once built and safe for concurrent queries.
    """

    _K = 4

    def __init__(self, points):
        p = _as_points(points) if np.size(points) else np.zeros((0, 3))
        if len(p) == 0:
            raise EmptyPointSet("cannot index an empty point set")
        if not np.all(np.isfinite(p)):
            raise ValueError("points must be finite")
        self.points = p.copy()
        self.points.setflags(write=False)
        self._tree = cKDTree(self.points, balanced_tree=True, compact_nodes=True)
        self._scale = float(np.abs(self.points).max())

    def __len__(self):
        return len(self.points)

    def query(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """Nearest point index and distance for each row of ``queries``."""
        q = _as_points(queries)
        n = len(self.points)
        if len(q) == 0:
            return np.zeros(0, np.int64), np.zeros(0)
        k = min(self._K, n)
        d_tree, idx = self._tree.query(q, k=k)
        d_tree = d_tree.reshape(len(q), k)
        idx = idx.reshape(len(q), k).astype(np.int64)

        exact = point_distance(self.points[idx], q[:, None, :])
        # lexicographic (distance, index) minimum over the k candidates
        order = np.lexsort((idx, exact), axis=1)[:, 0] if k > 1 else np.zeros(len(q), np.int64)
        rows = np.arange(len(q))
        best_i = idx[rows, order]
        best_d = exact[rows, order]

        if k < n:
            slack = best_d * 1e-9 + 1e-12 * (1.0 + max(self._scale, float(np.abs(q).max())))
            unsure = np.nonzero(d_tree[:, -1] <= best_d + slack)[0]
            for r in unsure:
                cand = np.asarray(self._tree.query_ball_point(q[r], best_d[r] + slack[r]), np.int64)
                cand.sort()
                dc = point_distance(self.points[cand], q[r])
                j = int(np.argmin(dc))  # argmin returns the first (lowest index) minimum
                best_i[r], best_d[r] = cand[j], dc[j]
        return best_i, best_d


def build_spatial_index(points) -> SpatialIndex:
    return SpatialIndex(points)


def nearest_neighbor(index: SpatialIndex, query) -> tuple[int, float]:
    i, d = index.query(np.asarray(query, dtype=np.float64).reshape(1, 3))
    return int(i[0]), float(d[0])


# --------------------------------------------------------------------------
# point-to-point

@dataclass(frozen=True, eq=False)
class DistanceStats:
    """Per-point distances plus the mean, SD (population) and max."""

    per_point: np.ndarray
    mean: float
    sd: float
    max: float

    @classmethod
    def from_distances(cls, d) -> "DistanceStats":
        d = np.array(d, dtype=np.float64).ravel()
        if d.size == 0:
            raise EmptyPointSet("no distances to summarize")
        d.setflags(write=False)
        return cls(d, float(np.mean(d)), float(np.std(d)), float(np.max(d)))

    def summary(self) -> dict:
        return {"mean": self.mean, "sd": self.sd, "max": self.max, "n": int(self.per_point.size)}


def _vertices(geom) -> np.ndarray:
    if isinstance(geom, TriangleMesh):
        return geom.vertices
    if isinstance(geom, LandmarkSet):
        return geom.points
    return _as_points(geom)


def point_to_point_stats(source, target, direction: str = "source_to_target") -> DistanceStats:
    """Vertex-to-nearest-vertex distances between two aligned meshes.

    ``direction`` is ``"source_to_target"`` (default: one distance per
    source vertex), ``"target_to_source"`` or ``"symmetric"`` (both lists
    concatenated, source first).
    """
    src, tgt = _vertices(source), _vertices(target)
    if len(src) == 0 or len(tgt) == 0:
        raise EmptyPointSet("point_to_point_stats needs non-empty inputs")
    if direction == "source_to_target":
        d = SpatialIndex(tgt).query(src)[1]
    elif direction == "target_to_source":
        d = SpatialIndex(src).query(tgt)[1]
    elif direction == "symmetric":
        d = np.concatenate([SpatialIndex(tgt).query(src)[1], SpatialIndex(src).query(tgt)[1]])
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return DistanceStats.from_distances(d)


# --------------------------------------------------------------------------
# point-to-surface

def _segment_distance(p, a, b):
    ab = b - a
    denom = np.sum(ab * ab, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.sum((p - a) * ab, axis=-1) / denom
    t = np.where(denom > 0, np.clip(t, 0.0, 1.0), 0.0)
    return point_distance(p, a + t[..., None] * ab)


def points_to_triangles_distance(p, a, b, c) -> np.ndarray:
    """Broadcasting point-to-triangle distance.

    The closest point is either the orthogonal projection (when it falls
    inside the triangle) or lies on one of the three edges, so the distance
    is the smaller of those candidates.  Degenerate triangles have no
    interior and reduce to segment/point distances.
    """
    p, a, b, c = (np.asarray(x, dtype=np.float64) for x in (p, a, b, c))
    ab, ac, ap = b - a, c - a, p - a
    n = np.cross(ab, ac)
    nn = np.sum(n * n, axis=-1)
    d00 = np.sum(ab * ab, axis=-1)
    d11 = np.sum(ac * ac, axis=-1)
    d01 = np.sum(ab * ac, axis=-1)
    h = np.sum(ap * n, axis=-1)
    # non-degenerate: |ab x ac|^2 well above rounding noise of d00 * d11
    solid = nn > 1e-24 * d00 * d11
    with np.errstate(invalid="ignore", divide="ignore"):
        q = ap - (h / nn)[..., None] * n
        d20 = np.sum(q * ab, axis=-1)
        d21 = np.sum(q * ac, axis=-1)
        v = (d11 * d20 - d01 * d21) / nn
        w = (d00 * d21 - d01 * d20) / nn
        plane = np.abs(h) / np.sqrt(nn)
    inside = solid & (v >= 0) & (w >= 0) & (v + w <= 1)

    edge = np.minimum(
        np.minimum(_segment_distance(p, a, b), _segment_distance(p, b, c)),
        _segment_distance(p, c, a),
    )
    return np.where(inside, np.minimum(plane, edge), edge)


def point_to_triangle_distance(p, tri) -> float:
    """Exact distance from point ``p`` to the triangle with vertex rows ``tri``."""
    tri = np.asarray(tri, dtype=np.float64).reshape(3, 3)
    return float(points_to_triangles_distance(p, tri[0], tri[1], tri[2]))


@dataclass(frozen=True, eq=False)
class DeviationField:
    per_vertex: np.ndarray

    def __len__(self):
        return len(self.per_vertex)

    def summary(self) -> dict:
        d = self.per_vertex
        return {
            "mean": float(np.mean(d)),
            "sd": float(np.std(d)),
            "p50": float(np.percentile(d, 50)),
            "p95": float(np.percentile(d, 95)),
            "max": float(np.max(d)),
            "n": int(d.size),
        }


def surface_deviation(source, target: TriangleMesh, chunk: int = 4096) -> DeviationField:
    """Distance from every source vertex to the closest point of ``target``.

    Candidate triangles come from a kD-tree over triangle centroids.  An
    upper bound from the few nearest-centroid triangles is widened by the
    largest centroid-to-vertex radius; every triangle that could beat the
    bound has its centroid inside that ball, so the minimum is exact.
    """
    src = _vertices(source)
    if target.face_count == 0:
        raise NoFaces("target mesh has no faces")
    tri = target.vertices[target.faces]
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    centroids = tri.mean(axis=1)
    reach = float(np.max(point_distance(tri, centroids[:, None, :])))
    tree = cKDTree(centroids, balanced_tree=True)
    m = len(tri)
    k = min(8, m)
    out = np.empty(len(src))

    for start in range(0, len(src), chunk):
        p = src[start:start + chunk]
        _, near = tree.query(p, k=k)
        near = near.reshape(len(p), k)
        ub = points_to_triangles_distance(p[:, None, :], a[near], b[near], c[near]).min(axis=1)
        radii = ub + reach
        radii = radii + 1e-9 * (1.0 + radii)
        cands = tree.query_ball_point(p, radii)
        counts = np.fromiter((len(x) for x in cands), np.int64, len(p))
        flat = np.fromiter((j for x in cands for j in x), np.int64, int(counts.sum()))
        owner = np.repeat(np.arange(len(p)), counts)
        d = points_to_triangles_distance(p[owner], a[flat], b[flat], c[flat])
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        out[start:start + len(p)] = np.minimum(np.minimum.reduceat(d, starts), ub)
    out.setflags(write=False)
    return DeviationField(out)


def colorize_deviation(mesh: TriangleMesh, field, cap: float | None = None) -> TriangleMesh:
    """Vertex colours on a linear blue (0) to red (``cap`` and above) ramp.

    ``cap`` defaults to the 95th percentile of the field.  Channels are
    rounded half-to-even, so a value of ``cap / 2`` maps to (128, 0, 128).
    """
    d = np.asarray(getattr(field, "per_vertex", field), dtype=np.float64)
    if len(d) != mesh.vertex_count:
        raise LengthMismatch(f"{len(d)} deviations for {mesh.vertex_count} vertices")
    if cap is None:
        cap = float(np.percentile(d, 95)) if len(d) else 0.0
    if cap > 0:
        t = np.clip(d / cap, 0.0, 1.0)
    else:
        t = (d > 0).astype(np.float64)
    colors = np.empty((len(d), 3))
    colors[:, 0] = np.round(255.0 * t)
    colors[:, 1] = 0.0
    colors[:, 2] = np.round(255.0 * (1.0 - t))
    return mesh.replace(vertex_colors=colors.astype(np.uint8))


def crop_sphere(mesh: TriangleMesh, center, radius: float) -> TriangleMesh:
    """Keep the part of ``mesh`` within ``radius`` of ``center``.

    A face survives only if all three of its vertices are inside.  Vertices
    that lose all their faces are dropped; vertices that were never used by
    a face are kept when inside.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    v = mesh.vertices
    inside = point_distance(v, np.asarray(center, dtype=np.float64).reshape(1, 3)) <= radius
    f = mesh.faces
    keep_face = inside[f].all(axis=1) if len(f) else np.zeros(0, dtype=bool)
    was_used = np.zeros(len(v), dtype=bool)
    was_used[f.ravel()] = True
    still_used = np.zeros(len(v), dtype=bool)
    still_used[f[keep_face].ravel()] = True
    keep = inside & (still_used | ~was_used)
    if not keep.any():
        raise EmptyResult(f"no vertex within {radius} mm of {np.asarray(center).tolist()}")
    new_index = np.full(len(v), -1, np.int64)
    new_index[keep] = np.arange(int(keep.sum()))
    return TriangleMesh(
        v[keep],
        new_index[f[keep_face]],
        None if mesh.vertex_colors is None else mesh.vertex_colors[keep],
        None if mesh.vertex_normals is None else mesh.vertex_normals[keep],
    )


# --------------------------------------------------------------------------
# similarity alignment

@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """x -> scale * rotation @ x + translation."""

    rotation: np.ndarray
    scale: float = 1.0
    translation: np.ndarray = None

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.zeros(3) if self.translation is None else np.array(self.translation, dtype=np.float64).reshape(3)
        if np.linalg.norm(r.T @ r - np.eye(3)) >= 1e-9 or np.linalg.det(r) <= 0:
            raise ValueError("rotation must be a proper orthonormal matrix")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "scale", float(self.scale))

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(np.eye(3), 1.0, np.zeros(3))

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return self.scale * (p @ self.rotation.T) + self.translation

    def inverse(self) -> "SimilarityTransform":
        rt = self.rotation.T
        return SimilarityTransform(rt, 1.0 / self.scale, -(rt @ self.translation) / self.scale)

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """``self`` after ``other``."""
        return SimilarityTransform(
            self.rotation @ other.rotation,
            self.scale * other.scale,
            self.scale * (self.rotation @ other.translation) + self.translation,
        )

    @property
    def rotation_angle(self) -> float:
        # atan2 keeps precision near 0 where arccos of the trace does not
        r = self.rotation
        s = 0.5 * np.linalg.norm([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
        c = (np.trace(r) - 1.0) / 2.0
        return float(np.arctan2(s, c))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.scale * self.rotation
        m[:3, 3] = self.translation
        return m

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation.tolist(),
            "scale": self.scale,
            "translation": self.translation.tolist(),
        }


def fit_similarity(source, target, allow_scale: bool = True) -> SimilarityTransform:
    """Least-squares similarity (or rigid) transform mapping ``source`` rows onto ``target`` rows.

    Closed form via the SVD of the cross-covariance, with the sign of the
    last singular direction flipped when needed so that det(R) = +1.
    """
    x, y = _as_points(source), _as_points(target)
    if x.shape != y.shape:
        raise LengthMismatch(f"{len(x)} source points vs {len(y)} target points")
    if len(x) < 3:
        raise DegenerateConfiguration("need at least 3 corresponding points")
    mx, my = x.mean(axis=0), y.mean(axis=0)
    xc, yc = x - mx, y - my
    for name, pts in (("source", xc), ("target", yc)):
        sv = np.linalg.svd(pts, compute_uv=False)
        if sv[0] == 0 or sv[1] <= 1e-12 * sv[0]:
            raise DegenerateConfiguration(f"{name} landmarks are collinear or coincident")
    if np.array_equal(x, y):
        # exact optimum; the SVD route would leave rounding residue
        return SimilarityTransform.identity()
    n = len(x)
    cov = yc.T @ xc / n
    u, d, vt = np.linalg.svd(cov)
    s = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2] = -1.0
    r = (u * s) @ vt
    scale = float(np.sum(d * s) / (np.sum(xc * xc) / n)) if allow_scale else 1.0
    t = my - scale * (r @ mx)
    return SimilarityTransform(r, scale, t)


def similarity_align(source: LandmarkSet, target: LandmarkSet, allow_scale: bool = True) -> SimilarityTransform:
    if source.names != target.names:
        raise NameMismatch("source and target landmark names differ")
    return fit_similarity(source.points, target.points, allow_scale)


def apply_transform(geometry, transform: SimilarityTransform):
    """Map a mesh, landmark set or raw (n, 3) array through ``transform``.

    Mesh normals are rotated but not scaled.
    """
    if isinstance(geometry, TriangleMesh):
        normals = None
        if geometry.vertex_normals is not None:
            normals = geometry.vertex_normals @ transform.rotation.T
        return geometry.replace(vertices=transform.apply(geometry.vertices), vertex_normals=normals)
    if isinstance(geometry, LandmarkSet):
        return geometry.replace(points=transform.apply(geometry.points))
    return transform.apply(geometry)
