import csv
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from facemorph import errors
from facemorph.edma import (
    FormDifferenceResult,
    FormMatrix,
    SignificantDistance,
    SignificantDistanceSet,
    bootstrap_fdm,
    form_difference_matrix,
    form_matrix,
    matching_distances,
    mean_form,
    significant_distances,
    top_n,
    write_fdm_csv,
)
from facemorph.synthkit import PopulationSpec, face_template, generate_population


def forms(group):
    return [form_matrix(s) for s in group]


def fdm_from(pairs, ratios, lo, hi):
    return FormDifferenceResult(tuple(pairs), np.array(ratios), np.array(lo), np.array(hi), 0.1, 0, 0)


def test_twenty_one_landmarks():
    f = form_matrix(face_template())
    assert len(f) == 210
    assert f.pair_names[0] == ("n", "prn") and f.pair_names[-1] == ("go_r", "go_l")


@pytest.mark.parametrize("L", [3, 4, 10, 21, 40])
def test_pair_count(rng, L):
    assert len(form_matrix(rng.normal(size=(L, 3)))) == L * (L - 1) // 2


def test_equilateral():
    x = np.array([[0.0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]])
    assert np.allclose(form_matrix(x).distances, 1.0, atol=1e-15)


def test_pair_order_and_values(rng):
    x = rng.normal(size=(6, 3))
    f = form_matrix(x, names=list("abcdef"))
    pairs = list(itertools.combinations(range(6), 2))
    assert f.pair_names == tuple(("abcdef"[i], "abcdef"[j]) for i, j in pairs)
    assert np.allclose(f.distances, [np.linalg.norm(x[i] - x[j]) for i, j in pairs], atol=1e-15)


def test_rigid_invariance_and_scaling(rng):
    x = rng.normal(scale=40, size=(21, 3))
    r = Rotation.random(random_state=rng).as_matrix()
    d = form_matrix(x).distances
    assert np.max(np.abs(form_matrix(x @ r.T + [5, -7, 300]).distances - d)) < 1e-12
    assert np.allclose(form_matrix(2.5 * x).distances, 2.5 * d, rtol=1e-14)


def test_coincident():
    x = np.array([[0.0, 0, 0], [1, 0, 0], [1, 0, 0], [0, 1, 0]])
    with pytest.raises(errors.CoincidentLandmarks):
        form_matrix(x)


def test_mean_form(rng):
    pairs = (("a", "b"), ("a", "c"), ("b", "c"))
    f1 = FormMatrix(np.array([2.0, 1, 1]), pairs)
    f2 = FormMatrix(np.array([4.0, 1, 1]), pairs)
    assert mean_form([f1, f2]).distances.tolist() == [3.0, 1.0, 1.0]
    assert np.array_equal(mean_form([f1, f1]).distances, f1.distances)
    group = forms(rng.normal(size=(9, 7, 3)))
    ref = [sum(f.distances[k] for f in group) / 9 for k in range(21)]
    assert np.allclose(mean_form(group).distances, ref, rtol=1e-15)
    with pytest.raises(errors.PairNameMismatch):
        mean_form([f1, FormMatrix(f2.distances, (("a", "b"), ("a", "c"), ("c", "b")))])


def test_form_difference(rng):
    a = forms(rng.normal(size=(6, 8, 3)))
    assert np.allclose(form_difference_matrix(a, a), 1.0, rtol=0, atol=0)
    doubled = [FormMatrix(2 * f.distances, f.pair_names) for f in a]
    assert np.allclose(form_difference_matrix(doubled, a), 2.0, rtol=1e-15)
    b = forms(rng.normal(size=(5, 8, 3)))
    ref = np.array([np.mean([f.distances[k] for f in a]) / np.mean([f.distances[k] for f in b])
                     for k in range(28)])
    assert np.allclose(form_difference_matrix(a, b), ref, rtol=1e-14)
    zero = [FormMatrix(np.zeros(3), (("a", "b"), ("a", "c"), ("b", "c")))] * 2
    with pytest.raises(errors.ZeroDenominator):
        form_difference_matrix(zero, zero)


def test_bootstrap_identical_forms():
    f = form_matrix(face_template())
    res = bootstrap_fdm([f] * 5, [f] * 5, n_boot=200)
    assert np.all(res.ratios == 1) and np.all(res.ci_low == 1) and np.all(res.ci_high == 1)
    s = significant_distances(res)
    assert s.longer == () and s.shorter == ()


def test_bootstrap_same_sample_not_significant():
    a, _ = generate_population(PopulationSpec(face_template(), (20, 20), 1.0, seed=4))
    res = bootstrap_fdm(forms(a), forms(a), n_boot=300, seed=2)
    s = significant_distances(res)
    assert s.longer == () and s.shorter == ()


def test_bootstrap_percentile_oracle():
    a, b = generate_population(PopulationSpec(face_template(), (7, 9), 2.0, seed=8))
    fa, fb = forms(a), forms(b)
    res = bootstrap_fdm(fa, fb, n_boot=150, alpha=0.2, seed=11)
    da = np.stack([f.distances for f in fa])
    db = np.stack([f.distances for f in fb])
    root = np.random.SeedSequence(11)
    boot = []
    for child in root.spawn(150):
        g = np.random.Generator(np.random.Philox(child))
        ia, ib = g.integers(0, 7, 7), g.integers(0, 9, 9)
        boot.append(da[ia].mean(axis=0) / db[ib].mean(axis=0))
    lo, hi = np.percentile(np.array(boot), [10, 90], axis=0)
    assert np.allclose(res.ci_low, np.minimum(lo, res.ratios), rtol=1e-14)
    assert np.allclose(res.ci_high, np.maximum(hi, res.ratios), rtol=1e-14)


def test_bootstrap_known_ratio(rng):
    pairs = (("a", "b"), ("a", "c"), ("b", "c"))
    base = np.array([10.0, 20.0, 30.0])
    a = [FormMatrix(base * [1.5, 1, 1] * (1 + 0.01 * rng.normal(size=3)), pairs) for _ in range(40)]
    b = [FormMatrix(base * (1 + 0.01 * rng.normal(size=3)), pairs) for _ in range(40)]
    res = bootstrap_fdm(a, b, n_boot=1000, seed=0)
    assert res.ci_low[0] > 1
    assert res.ratios[0] == pytest.approx(1.5, rel=0.01)
    s = significant_distances(res)
    assert s.longer[0].pair == ("a", "b")


def test_bootstrap_invariants_and_determinism():
    a, b = generate_population(PopulationSpec(face_template(), (10, 12), 1.0, seed=3))
    r1 = bootstrap_fdm(forms(a), forms(b), n_boot=300, seed=5)
    r2 = bootstrap_fdm(forms(a), forms(b), n_boot=300, seed=5, chunk=7)
    assert np.array_equal(r1.ci_low, r2.ci_low) and np.array_equal(r1.ci_high, r2.ci_high)
    assert np.all(r1.ci_low <= r1.ratios) and np.all(r1.ratios <= r1.ci_high)
    assert np.all(r1.ratios > 0)
    r3 = bootstrap_fdm(forms(a), forms(b), n_boot=300, seed=6)
    assert not np.array_equal(r1.ci_low, r3.ci_low)


def test_bootstrap_errors():
    f = form_matrix(face_template())
    with pytest.raises(errors.GroupTooSmall):
        bootstrap_fdm([f], [f, f])
    with pytest.raises(ValueError):
        bootstrap_fdm([f, f], [f, f], alpha=1.0)


def test_significant_partition():
    pairs = [("a", "b"), ("a", "c"), ("b", "c"), ("a", "d")]
    res = fdm_from(pairs, [1.3, 0.8, 1.0, 1.1], [1.2, 0.7, 0.9, 0.95], [1.4, 0.9, 1.1, 1.2])
    s = significant_distances(res)
    assert [x.pair for x in s.longer] == [("a", "b")]
    assert [x.pair for x in s.shorter] == [("a", "c")]
    none = significant_distances(fdm_from(pairs, [1.0] * 4, [0.9] * 4, [1.1] * 4))
    assert none.longer == () and none.shorter == ()


def test_significant_sorting_and_ties():
    pairs = [("b", "c"), ("a", "c"), ("a", "b"), ("c", "d"), ("d", "e"), ("a", "e")]
    ratios = [1.2, 1.5, 1.2, 0.7, 0.7, 0.9]
    lo = [r - 0.05 for r in ratios]
    hi = [r + 0.05 for r in ratios]
    s = significant_distances(fdm_from(pairs, ratios, lo, hi))
    assert [x.pair for x in s.longer] == [("a", "c"), ("a", "b"), ("b", "c")]
    assert [x.pair for x in s.shorter] == [("c", "d"), ("d", "e"), ("a", "e")]
    assert not {x.pair for x in s.longer} & {x.pair for x in s.shorter}


def _set(longer, shorter):
    mk = lambda ps, r: tuple(SignificantDistance(p, r, r, r) for p in ps)
    return SignificantDistanceSet(mk(longer, 1.5), mk(shorter, 0.5))


def test_top_n_counts():
    s = SignificantDistanceSet(
        tuple(SignificantDistance((f"p{i:02d}", "q"), 2.0 - i / 100, 1.5, 2.5) for i in range(15)),
        tuple(SignificantDistance((f"s{i}", "q"), 0.5, 0.4, 0.6) for i in range(3)),
    )
    t5 = top_n(s, 5)
    assert len(t5.longer) == 5 and len(t5.shorter) == 3
    assert t5.to_dict()["n_shorter"] == 3
    t10 = top_n(s, 10)
    assert [x.ratio for x in t10.longer] == sorted((x.ratio for x in s.longer), reverse=True)[:10]
    with pytest.raises(ValueError):
        top_n(s, 0)


def test_matching_distances():
    ref = top_n(_set([("a", "b"), ("a", "c")], [("b", "c")]), 2)
    assert matching_distances(ref, ref).to_dict() == {"n": 2, "longer": 100.0, "shorter": 50.0, "avg": 75.0}
    other = top_n(_set([("x", "y")], [("y", "z")]), 2)
    md = matching_distances(ref, other)
    assert md.longer == 0 and md.shorter == 0 and md.average == 0
    half = top_n(_set([("a", "b"), ("q", "r")], [("b", "c"), ("s", "t")]), 2)
    full = top_n(_set([("a", "b"), ("a", "c")], [("b", "c"), ("u", "v")]), 2)
    assert matching_distances(full, half).to_dict() == matching_distances(half, full).to_dict()
    with pytest.raises(ValueError):
        matching_distances(ref, top_n(_set([], []), 3))


@settings(max_examples=50)
@given(st.sets(st.integers(0, 30), min_size=5, max_size=5), st.sets(st.integers(0, 30), min_size=5, max_size=5))
def test_matching_symmetric_property(a, b):
    ta = top_n(_set([(str(i), "z") for i in sorted(a)], [(str(i), "y") for i in sorted(b)]), 5)
    tb = top_n(_set([(str(i), "z") for i in sorted(b)], [(str(i), "y") for i in sorted(a)]), 5)
    m1, m2 = matching_distances(ta, tb), matching_distances(tb, ta)
    assert (m1.longer, m1.shorter) == (m2.longer, m2.shorter)
    assert m1.longer == 100 * len(a & b) / 5


def test_fdm_csv(tmp_path):
    pairs = [("a", "b"), ("a", "c"), ("b", "c")]
    res = fdm_from(pairs, [1.3, 0.8, 1.0], [1.2, 0.7, 0.9], [1.4, 0.9, 1.1])
    write_fdm_csv(res, tmp_path / "fdm.csv")
    rows = list(csv.DictReader(open(tmp_path / "fdm.csv")))
    assert list(rows[0]) == ["pair", "ratio", "ci_low", "ci_high", "significant", "direction"]
    assert [(r["pair"], r["significant"], r["direction"]) for r in rows] == [
        ("a-b", "1", "longer"), ("a-c", "1", "shorter"), ("b-c", "0", "")]
    assert float(rows[0]["ratio"]) == 1.3
