"""Euclidean distance matrix analysis (EDMA) of landmark forms.

A form is the vector of all C(L, 2) inter-landmark distances in index-pair
order (0,1), (0,2), ..., (L-2, L-1).  Group forms are compared by per-pair
ratios of mean forms, with percentile bootstrap confidence intervals.
Distances stay in millimetres: no size normalization is applied.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CoincidentLandmarks, GroupTooSmall, PairNameMismatch, ZeroDenominator
from .meshio import LandmarkSet
from .morpho import as_configuration, permutation_streams

__all__ = [
    "FormMatrix",
    "FormDifferenceResult",
    "SignificantDistance",
    "SignificantDistanceSet",
    "TopN",
    "MatchingDistances",
    "form_matrix",
    "mean_form",
    "form_difference_matrix",
    "bootstrap_fdm",
    "significant_distances",
    "top_n",
    "matching_distances",
    "write_fdm_csv",
]

N_BOOT = 1000
ALPHA = 0.10

Pair = tuple[str, str]


@dataclass(frozen=True, eq=False)
class FormMatrix:
    distances: np.ndarray
    pair_names: tuple[Pair, ...]
    subject_id: str = ""
    method_tag: str = ""

    def __len__(self):
        return len(self.distances)


def _pair_names(names: Sequence[str]) -> tuple[Pair, ...]:
    i, j = np.triu_indices(len(names), k=1)
    return tuple((names[a], names[b]) for a, b in zip(i.tolist(), j.tolist()))


def form_matrix(c, names: Sequence[str] | None = None) -> FormMatrix:
    """All pairwise inter-landmark distances of one configuration."""
    subject, method = "", ""
    if isinstance(c, LandmarkSet):
        names = c.names if names is None else names
        subject, method = c.subject_id, c.method_tag
    x = as_configuration(c)
    if names is None:
        names = [f"L{k}" for k in range(len(x))]
    names = [str(n) for n in names]
    if len(names) != len(x):
        raise PairNameMismatch(f"{len(names)} names for {len(x)} landmarks")
    i, j = np.triu_indices(len(x), k=1)
    d = x[i] - x[j]
    dist = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2])
    if np.any(dist == 0):
        k = int(np.argmin(dist))
        raise CoincidentLandmarks(f"landmarks {names[i[k]]!r} and {names[j[k]]!r} coincide")
    dist.setflags(write=False)
    return FormMatrix(dist, _pair_names(names), subject, method)


def _stack(group: Sequence[FormMatrix]) -> tuple[np.ndarray, tuple[Pair, ...]]:
    group = list(group)
    if not group:
        raise GroupTooSmall("empty group of forms")
    pairs = group[0].pair_names
    if any(f.pair_names != pairs for f in group):
        raise PairNameMismatch("forms have different landmark pairs")
    return np.stack([f.distances for f in group]), pairs


def mean_form(group: Sequence[FormMatrix]) -> FormMatrix:
    """Per-pair arithmetic mean of a group of forms."""
    d, pairs = _stack(group)
    if len(d) < 2:
        raise GroupTooSmall("mean form needs at least 2 forms")
    m = d.mean(axis=0)
    m.setflags(write=False)
    return FormMatrix(m, pairs, "", group[0].method_tag)


def _ratios(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    if np.any(den == 0):
        raise ZeroDenominator("mean distance of zero in the denominator group")
    return num / den


def form_difference_matrix(group_a: Sequence[FormMatrix], group_b: Sequence[FormMatrix]) -> np.ndarray:
    """ratio_k = mean distance k in A / mean distance k in B."""
    da, pa = _stack(group_a)
    db, pb = _stack(group_b)
    if pa != pb:
        raise PairNameMismatch("groups have different landmark pairs")
    return _ratios(da.mean(axis=0), db.mean(axis=0))


@dataclass(frozen=True, eq=False)
class FormDifferenceResult:
    pair_names: tuple[Pair, ...]
    ratios: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    alpha: float
    n_boot: int
    seed: int

    def __len__(self):
        return len(self.ratios)


def bootstrap_fdm(group_a: Sequence[FormMatrix], group_b: Sequence[FormMatrix],
                  n_boot: int = N_BOOT, alpha: float = ALPHA, seed: int = 0,
                  chunk: int = 256) -> FormDifferenceResult:
    """Form difference ratios with percentile bootstrap intervals.

    Subjects are resampled with replacement within each group; replicate
    ``i`` draws from its own stream keyed on ``(seed, i)``.  The interval is
    the [alpha/2, 1 - alpha/2] percentile range of the replicate ratios,
    widened if necessary to contain the observed ratio.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    if n_boot < 1:
        raise ValueError("n_boot must be positive")
    da, pa = _stack(group_a)
    db, pb = _stack(group_b)
    if len(da) < 2 or len(db) < 2:
        raise GroupTooSmall("each group needs at least 2 forms")
    if pa != pb:
        raise PairNameMismatch("groups have different landmark pairs")
    ratios = _ratios(da.mean(axis=0), db.mean(axis=0))

    na, nb = len(da), len(db)
    ia = np.empty((n_boot, na), np.int64)
    ib = np.empty((n_boot, nb), np.int64)
    for r, rng in enumerate(permutation_streams(seed, n_boot)):
        ia[r] = rng.integers(0, na, na)
        ib[r] = rng.integers(0, nb, nb)
    boot = np.empty((n_boot, da.shape[1]))
    for s in range(0, n_boot, chunk):
        boot[s:s + chunk] = _ratios(da[ia[s:s + chunk]].mean(axis=1), db[ib[s:s + chunk]].mean(axis=1))

    lo, hi = np.quantile(boot, [alpha / 2, 1 - alpha / 2], axis=0)
    lo = np.minimum(lo, ratios)
    hi = np.maximum(hi, ratios)
    for a in (ratios, lo, hi):
        a.setflags(write=False)
    return FormDifferenceResult(pa, ratios, lo, hi, float(alpha), int(n_boot), seed)


@dataclass(frozen=True)
class SignificantDistance:
    pair: Pair
    ratio: float
    ci_low: float
    ci_high: float

    @property
    def label(self) -> str:
        return f"{self.pair[0]}-{self.pair[1]}"


@dataclass(frozen=True)
class SignificantDistanceSet:
    longer: tuple[SignificantDistance, ...]
    shorter: tuple[SignificantDistance, ...]


def significant_distances(fdm: FormDifferenceResult) -> SignificantDistanceSet:
    """Pairs whose interval excludes 1.

    ``longer`` (ci_low > 1) is sorted by descending ratio, ``shorter``
    (ci_high < 1) by ascending ratio; ties go to the lexicographically
    smaller pair name.
    """
    items = [
        SignificantDistance(p, float(r), float(lo), float(hi))
        for p, r, lo, hi in zip(fdm.pair_names, fdm.ratios, fdm.ci_low, fdm.ci_high)
    ]
    longer = sorted((s for s in items if s.ci_low > 1), key=lambda s: (-s.ratio, s.pair))
    shorter = sorted((s for s in items if s.ci_high < 1), key=lambda s: (s.ratio, s.pair))
    return SignificantDistanceSet(tuple(longer), tuple(shorter))


@dataclass(frozen=True)
class TopN:
    n: int
    longer: tuple[SignificantDistance, ...]
    shorter: tuple[SignificantDistance, ...]

    def to_dict(self) -> dict:
        def rows(items):
            return [{"pair": list(s.pair), "ratio": s.ratio, "ci_low": s.ci_low,
                     "ci_high": s.ci_high} for s in items]
        return {"n": self.n, "longer": rows(self.longer), "shorter": rows(self.shorter),
                "n_longer": len(self.longer), "n_shorter": len(self.shorter)}


def top_n(s: SignificantDistanceSet, n: int) -> TopN:
    """The first ``min(n, available)`` entries of each ordered list."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return TopN(n, s.longer[:n], s.shorter[:n])


@dataclass(frozen=True)
class MatchingDistances:
    n: int
    longer: float
    shorter: float

    @property
    def average(self) -> float:
        return (self.longer + self.shorter) / 2.0

    def to_dict(self) -> dict:
        return {"n": self.n, "longer": self.longer, "shorter": self.shorter, "avg": self.average}


def matching_distances(reference: TopN, method: TopN) -> MatchingDistances:
    """Percentage of the reference top-n pairs also found by the method (per direction)."""
    if reference.n != method.n:
        raise ValueError("reference and method top-n sets use different n")
    n = reference.n

    def pct(a, b):
        return 100.0 * len({s.pair for s in a} & {s.pair for s in b}) / n

    return MatchingDistances(n, pct(reference.longer, method.longer),
                             pct(reference.shorter, method.shorter))


def fdm_rows(fdm: FormDifferenceResult) -> list[dict]:
    rows = []
    for p, r, lo, hi in zip(fdm.pair_names, fdm.ratios, fdm.ci_low, fdm.ci_high):
        direction = "longer" if lo > 1 else "shorter" if hi < 1 else ""
        rows.append({
            "pair": f"{p[0]}-{p[1]}",
            "ratio": repr(float(r)),
            "ci_low": repr(float(lo)),
            "ci_high": repr(float(hi)),
            "significant": int(bool(direction)),
            "direction": direction,
        })
    return rows


def write_fdm_csv(fdm: FormDifferenceResult, path) -> None:
    """CSV with columns pair, ratio, ci_low, ci_high, significant, direction."""
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, ["pair", "ratio", "ci_low", "ci_high", "significant", "direction"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(fdm_rows(fdm))
