"""Landmark-based geometric morphometrics.

Configurations are (L, 3) arrays (or :class:`~facemorph.meshio.LandmarkSet`
objects, whose ``points`` are used).  Reflections are never allowed in any
rotation fit: faces are chiral.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import (
    DegenerateConfiguration,
    DegenerateHull,
    GroupTooSmall,
    LengthMismatch,
    NameMismatch,
    NoConvergenceWarning,
    RankDeficientWarning,
    ZeroArea,
    ZeroVariance,
)
from .meshio import LandmarkSet

__all__ = [
    "GpaResult",
    "PcaResult",
    "PermutationResult",
    "CorrelationResult",
    "as_configuration",
    "stack_configurations",
    "centroid_size",
    "orthogonal_procrustes",
    "gpa",
    "procrustes_distance",
    "pairwise_procrustes_distances",
    "mean_shape_distance",
    "permutation_test_pd",
    "pca",
    "convex_hull_2d",
    "polygon_area",
    "clip_convex",
    "polygon_iou",
    "pearson_correlation",
]

GPA_TOL = 1e-10
GPA_MAX_ITER = 100
N_PERM = 10_000
# permuted statistics within this distance of the observed one count as ties
PD_TIE_TOL = 1e-12


def as_configuration(c) -> np.ndarray:
    if isinstance(c, LandmarkSet):
        return np.array(c.points, dtype=np.float64)
    x = np.asarray(c, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 3 or len(x) < 3:
        raise ValueError(f"configuration must be (L >= 3, 3), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("configuration contains NaN/inf")
    return x


def stack_configurations(samples) -> np.ndarray:
    """(N, L, 3) array from LandmarkSets or arrays.

    LandmarkSets must share one name sequence.
    """
    samples = list(samples)
    sets = [s for s in samples if isinstance(s, LandmarkSet)]
    if sets and any(s.names != sets[0].names for s in sets):
        raise NameMismatch("configurations have different landmark name sequences")
    arrs = [as_configuration(s) for s in samples]
    if len({a.shape for a in arrs}) > 1:
        raise LengthMismatch("configurations have different landmark counts")
    return np.stack(arrs)


def _center(x: np.ndarray) -> np.ndarray:
    return x - x.mean(axis=-2, keepdims=True)


def centroid_size(c) -> float:
    """Square root of the summed squared landmark distances to the centroid."""
    x = _center(as_configuration(c))
    cs = float(np.sqrt(np.sum(x * x)))
    if cs == 0.0:
        raise DegenerateConfiguration("all landmarks coincide")
    return cs


def _rotation_from_cross(m: np.ndarray, warn: bool = True) -> np.ndarray:
    """Proper rotation R maximizing trace(R^T m) (batched over leading axes)."""
    u, s, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    d = np.where(d == 0, 1.0, d)
    u = u.copy()
    u[..., :, 2] *= d[..., None]
    if warn:
        s = np.atleast_2d(s)
        d = np.atleast_1d(d)
        scale = np.maximum(s[:, 0], np.finfo(float).tiny)
        ambiguous = (s[:, 1] <= 1e-12 * scale) | ((d < 0) & (s[:, 1] - s[:, 2] <= 1e-12 * scale))
        if ambiguous.any():
            warnings.warn("rotation fit is not unique (rank-deficient cross-covariance)",
                          RankDeficientWarning, stacklevel=3)
    return u @ vt


def orthogonal_procrustes(a, b) -> np.ndarray:
    """Rotation R (det +1) minimizing ||A R - B||_F for centered A, B.

    Emits :class:`RankDeficientWarning` when the optimum is not unique; the
    SVD solution is still returned.
    """
    a, b = as_configuration(a), as_configuration(b)
    if a.shape != b.shape:
        raise LengthMismatch("configurations have different landmark counts")
    # ||A R - B|| is minimized by maximizing trace(R^T A^T B)
    return _rotation_from_cross(a.T @ b)


def _preshape(x: np.ndarray) -> np.ndarray:
    x = _center(x)
    cs = np.sqrt(np.sum(x * x, axis=(-2, -1), keepdims=True))
    if np.any(cs == 0):
        raise DegenerateConfiguration("all landmarks coincide")
    return x / cs


def _canonical_frame(shape: np.ndarray) -> np.ndarray:
    """Rotation putting a centered shape onto its principal axes.

    Axis signs follow the third moment of the coordinates along each axis
    (falling back to the largest coordinate), the last axis completing a
    right-handed frame.
    """
    _, _, vt = np.linalg.svd(shape, full_matrices=True)
    axes = vt.copy()
    for k in range(2):
        proj = shape @ axes[k]
        m3 = np.sum(proj ** 3)
        if abs(m3) <= 1e-12 * np.sum(np.abs(proj) ** 3):
            m3 = proj[np.argmax(np.abs(proj))]
        if m3 < 0:
            axes[k] = -axes[k]
    axes[2] = np.cross(axes[0], axes[1])
    return axes.T  # right-multiplying rotates into the principal frame


@dataclass(frozen=True, eq=False)
class GpaResult:
    """Output of :func:`gpa`.

    ``aligned`` is (N, L, 3) Procrustes coordinates (unit centroid size when
    scaling is on), ``consensus`` the mean shape rescaled to unit centroid
    size, ``centroid_sizes`` the original sizes of the inputs.
    """

    aligned: np.ndarray
    consensus: np.ndarray
    centroid_sizes: np.ndarray
    iterations: int
    converged: bool
    names: tuple | None = None
    subject_ids: tuple | None = None

    @property
    def n(self) -> int:
        return len(self.aligned)

    def flat(self) -> np.ndarray:
        return self.aligned.reshape(self.n, -1)


def gpa(samples, scale: bool = True, tol: float = GPA_TOL, max_iter: int = GPA_MAX_ITER) -> GpaResult:
    """Generalized Procrustes superimposition.

    Each iteration rotates every centered (and, with ``scale``, unit-size)
    specimen onto the current consensus, then recomputes the consensus.
    Iteration stops once the RMS change of the consensus is below ``tol``.
    The final set is rotated into the principal-axes frame of the
    consensus, so the output does not depend on the pose of any input.
    """
    samples = list(samples.aligned) if isinstance(samples, GpaResult) else list(samples)
    if len(samples) < 2:
        raise GroupTooSmall("GPA needs at least 2 configurations")
    names = samples[0].names if isinstance(samples[0], LandmarkSet) else None
    subjects = tuple(s.subject_id for s in samples) if isinstance(samples[0], LandmarkSet) else None
    x = stack_configurations(samples)
    n, L, _ = x.shape

    x = _center(x)
    sizes = np.sqrt(np.sum(x * x, axis=(1, 2)))
    if np.any(sizes == 0):
        raise DegenerateConfiguration("a configuration has all landmarks coincident")
    if scale:
        x = x / sizes[:, None, None]

    def normalized_mean(y):
        m = y.mean(axis=0)
        return m / np.sqrt(np.sum(m * m))

    consensus = x[0] / np.sqrt(np.sum(x[0] * x[0]))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        rot = _rotation_from_cross(np.einsum("nli,lj->nij", x, consensus), warn=False)
        x = x @ rot
        new = normalized_mean(x)
        change = np.sqrt(np.mean((new - consensus) ** 2))
        consensus = new
        if change < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"GPA did not converge in {max_iter} iterations", NoConvergenceWarning,
                      stacklevel=2)

    frame = _canonical_frame(consensus)
    x = x @ frame
    consensus = consensus @ frame
    if not scale:
        consensus = x.mean(axis=0)
        consensus = consensus / np.sqrt(np.sum(consensus * consensus))
    x.setflags(write=False)
    consensus.setflags(write=False)
    sizes.setflags(write=False)
    return GpaResult(x, consensus, sizes, it, converged, names, subjects)


def procrustes_distance(a, b) -> float:
    """Partial Procrustes distance between the pre-shapes of ``a`` and ``b``.

    Both are centered and scaled to unit centroid size, ``b`` is rotated
    onto ``a``; the result is the root of the remaining sum of squares.
    """
    a, b = as_configuration(a), as_configuration(b)
    if a.shape != b.shape:
        raise LengthMismatch("configurations have different landmark counts")
    return float(_batched_pd(_preshape(a)[None], _preshape(b)[None])[0])


def _batched_pd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """PD between matching pre-shapes in two (k, L, 3) stacks."""
    rot = _rotation_from_cross(np.einsum("kli,klj->kij", b, a), warn=False)
    diff = a - b @ rot
    out = np.sqrt(np.sum(diff * diff, axis=(1, 2)))
    same = np.all(a == b, axis=(1, 2))
    out[same] = 0.0
    return out


def pairwise_procrustes_distances(g) -> np.ndarray:
    """PD for every unordered specimen pair in (0,1), (0,2), ... order."""
    x = g.aligned if isinstance(g, GpaResult) else stack_configurations(g)
    pre = _preshape(x)
    i, j = np.triu_indices(len(pre), k=1)
    if len(i) == 0:
        return np.zeros(0)
    return _batched_pd(pre[i], pre[j])


def mean_shape_distance(a, b) -> float:
    """PD between the mean shapes of two sets of aligned configurations."""
    return procrustes_distance(np.mean(a, axis=0), np.mean(b, axis=0))


@dataclass(frozen=True, eq=False)
class PermutationResult:
    observed_statistic: float
    permuted: np.ndarray
    p_value: float
    seed: int
    n_perm: int

    def to_dict(self) -> dict:
        return {
            "observed": self.observed_statistic,
            "p_value": self.p_value,
            "n_perm": self.n_perm,
            "seed": self.seed,
        }


def permutation_streams(seed: int, n: int):
    """Independent Philox generators, one per replicate, keyed on (seed, i)."""
    root = np.random.SeedSequence(seed)
    for child in root.spawn(n):
        yield np.random.Generator(np.random.Philox(child))


def permutation_test_pd(group_a, group_b, n_perm: int = N_PERM, seed: int = 0,
                        tol: float = GPA_TOL, max_iter: int = GPA_MAX_ITER) -> PermutationResult:
    """Permutation test on the PD between group mean shapes.

    Both groups go through one joint GPA.  Each replicate shuffles the group
    labels (sizes preserved) using its own RNG stream, so results do not
    depend on evaluation order.  p = (1 + #{permuted >= observed}) / (n_perm + 1).
    """
    a, b = list(group_a), list(group_b)
    if len(a) < 2 or len(b) < 2:
        raise GroupTooSmall("each group needs at least 2 configurations")
    joint = gpa(a + b, tol=tol, max_iter=max_iter)
    x = joint.flat()
    na = len(a)
    labels = np.zeros(len(x), dtype=bool)
    labels[:na] = True

    def stat(mask_rows: np.ndarray) -> np.ndarray:
        # mask_rows: (k, N) boolean, True = group A.  Gathered row means sum
        # both groups in the same order, so equal groups give equal means.
        order = np.argsort(~mask_rows, axis=1, kind="stable")
        ma = x[order[:, :na]].mean(axis=1)
        mb = x[order[:, na:]].mean(axis=1)
        L = x.shape[1] // 3
        return _batched_pd(_preshape(ma.reshape(-1, L, 3)), _preshape(mb.reshape(-1, L, 3)))

    observed = float(stat(labels[None])[0])
    masks = np.empty((n_perm, len(x)), dtype=bool)
    for i, rng in enumerate(permutation_streams(seed, n_perm)):
        masks[i] = rng.permutation(labels)
    permuted = np.concatenate([stat(masks[s:s + 2048]) for s in range(0, n_perm, 2048)]) \
        if n_perm else np.zeros(0)
    count = int(np.sum(permuted >= observed - PD_TIE_TOL))
    p = (1 + count) / (n_perm + 1)
    permuted.setflags(write=False)
    return PermutationResult(observed, permuted, p, seed, n_perm)


@dataclass(frozen=True, eq=False)
class PcaResult:
    """Principal components of flattened Procrustes coordinates.

    ``components`` rows are orthonormal; ``scores`` = (X - mean) @ components.T.
    """

    scores: np.ndarray
    components: np.ndarray
    variance_explained: np.ndarray
    mean: np.ndarray

    @property
    def total_variance(self) -> float:
        return float(np.sum(self.variance_explained))

    def proportion(self) -> np.ndarray:
        return self.variance_explained / self.total_variance

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.components.shape[1])
        return (x - self.mean) @ self.components.T

    def reconstruct(self, scores=None) -> np.ndarray:
        s = self.scores if scores is None else np.asarray(scores)
        return s @ self.components[: s.shape[1]] + self.mean


def pca(data) -> PcaResult:
    """PCA of a GpaResult or an (N, L, 3) / (N, 3L) stack (N >= 3).

    Computed from the SVD of the mean-centered data matrix; variances use
    N - 1.  Each component's sign makes its largest-magnitude loading
    positive.
    """
    if isinstance(data, GpaResult):
        x = data.flat()
    else:
        x = np.asarray(data, dtype=np.float64)
        x = x.reshape(len(x), -1)
    if len(x) < 3:
        raise GroupTooSmall("PCA needs at least 3 specimens")
    mean = x.mean(axis=0)
    xc = x - mean
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    k = min(len(x) - 1, x.shape[1])
    vt, s = vt[:k], s[:k]
    pivot = np.argmax(np.abs(vt), axis=1)
    signs = np.sign(vt[np.arange(k), pivot])
    vt = vt * signs[:, None]
    var = s ** 2 / (len(x) - 1)
    return PcaResult(xc @ vt.T, vt, var, mean)


# --------------------------------------------------------------------------
# convex hulls and IoU

def _cross2(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_2d(points) -> np.ndarray:
    """Counter-clockwise hull vertices (monotone chain), collinear points dropped."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected (n, 2) points, got {pts.shape}")
    uniq = sorted(set(map(tuple, pts.tolist())))
    if len(uniq) < 3:
        raise DegenerateHull("fewer than 3 distinct points")

    def chain(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and _cross2(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = chain(uniq)
    upper = chain(reversed(uniq))
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateHull("all points are collinear")
    return np.array(hull)


def polygon_area(poly) -> float:
    """Signed shoelace area (positive for counter-clockwise)."""
    p = np.asarray(poly, dtype=np.float64)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def clip_convex(subject, clip) -> np.ndarray:
    """Sutherland-Hodgman clipping of ``subject`` by the convex CCW polygon ``clip``."""
    out = [tuple(p) for p in np.asarray(subject, dtype=np.float64).tolist()]
    c = [tuple(p) for p in np.asarray(clip, dtype=np.float64).tolist()]
    for i in range(len(c)):
        if not out:
            break
        e0, e1 = c[i], c[(i + 1) % len(c)]
        inp, out = out, []
        prev = inp[-1]
        prev_side = _cross2(e0, e1, prev)
        for cur in inp:
            side = _cross2(e0, e1, cur)
            if side >= 0:
                if prev_side < 0:
                    out.append(_intersect(prev, cur, prev_side, side))
                out.append(cur)
            elif prev_side >= 0:
                out.append(_intersect(prev, cur, prev_side, side))
            prev, prev_side = cur, side
    return np.array(out).reshape(-1, 2)


def _intersect(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def _ccw(poly) -> np.ndarray:
    p = np.asarray(poly, dtype=np.float64)
    return p[::-1] if polygon_area(p) < 0 else p


def polygon_iou(a, b) -> float:
    """Intersection over union of two convex polygons."""
    a, b = _ccw(a), _ccw(b)
    area_a, area_b = polygon_area(a), polygon_area(b)
    if area_a <= 0 or area_b <= 0:
        raise ZeroArea("polygons must have positive area")
    inter = max(polygon_area(clip_convex(a, b)), 0.0)
    union = area_a + area_b - inter
    return float(min(max(inter / union, 0.0), 1.0))


# --------------------------------------------------------------------------
# correlation

@dataclass(frozen=True)
class CorrelationResult:
    r: float
    p_value: float
    n: int

    def to_dict(self) -> dict:
        return {"r": self.r, "p_value": self.p_value, "n": self.n}


def pearson_correlation(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    """Pearson r with a two-sided p-value from t = r sqrt((n-2)/(1-r^2)), df = n-2."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} vs {len(y)} samples")
    n = len(x)
    if n < 3:
        raise GroupTooSmall("correlation needs at least 3 samples")
    xc, yc = x - x.mean(), y - y.mean()
    sxx, syy = float(np.dot(xc, xc)), float(np.dot(yc, yc))
    if sxx == 0 or syy == 0:
        raise ZeroVariance("a variable has zero variance")
    r = float(np.dot(xc, yc) / np.sqrt(sxx * syy))
    r = min(max(r, -1.0), 1.0)
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = r * np.sqrt((n - 2) / (1.0 - r * r))
        p = float(2.0 * stats.t.sf(abs(t), n - 2))
    return CorrelationResult(r, min(p, 1.0), n)
