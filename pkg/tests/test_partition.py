import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skewdpm.exceptions import ConfigError, UndefinedMetricError
from skewdpm.partition import (
    SUBSAMPLE_THRESHOLD, binder_losses, binder_point_estimate, canonical_labels, contingency,
    f_measure_matrix, f_measure_pair, f_measure_total, f_point_estimate, limited_f_measure,
    similarity_matrix, subsample_indices)


# --- brute-force oracles ------------------------------------------------------------

def set_partitions(n):
    """All partitions of range(n) as label vectors (restricted growth strings)."""
    def grow(prefix, k):
        if len(prefix) == n:
            yield np.array(prefix)
            return
        for lab in range(k + 1):
            yield from grow(prefix + [lab], max(k, lab + 1))
    yield from grow([0], 1) if n else iter(())


def blocks(labels):
    out = {}
    for i, lab in enumerate(labels):
        out.setdefault(lab, set()).add(i)
    return list(out.values())


def brute_f_total(pred, ref):
    hs, gs = blocks(pred), blocks(ref)
    total = sum(len(g) * max(f_measure_pair(h, g) for h in hs) for g in gs)
    return total / sum(len(g) for g in gs)


def brute_limited_f(pred, ref, p):
    small = [g for g in blocks(ref) if len(g) < p]
    if not small:
        return None
    covered = set().union(*small)
    hp = [h for h in blocks(pred) if h & covered]
    keep = set().union(*hp)
    gp = [g & keep for g in blocks(ref) if g & keep]
    total = sum(len(g) * max(f_measure_pair(h, g) for h in hp) for g in gp)
    return total / sum(len(g) for g in gp)


def brute_binder(part, partitions):
    n = len(part)
    zeta = np.mean([[[a[c] == a[d] for d in range(n)] for c in range(n)] for a in partitions],
                   axis=0)
    return sum(2 * ((part[c] == part[d]) - zeta[c, d]) ** 2
               for c in range(n) for d in range(c + 1, n))


BELL = [1, 1, 2, 5, 15, 52, 203, 877, 4140]


def test_enumeration_counts():
    for n in range(1, 9):
        assert sum(1 for _ in set_partitions(n)) == BELL[n]


# --- similarity / Binder ---------------------------------------------------------------

def test_similarity_examples():
    z = similarity_matrix([[1, 1, 2], [1, 2, 2]])
    assert z[0, 1] == 0.5 and z[1, 2] == 0.5 and z[0, 2] == 0.0
    single = similarity_matrix([[3, 3, 1, 1]])
    np.testing.assert_array_equal(single, [[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 1, 1], [0, 0, 1, 1]])
    np.testing.assert_array_equal(similarity_matrix([[3, 3, 1, 1]] * 4), single)
    with pytest.raises(ConfigError):
        similarity_matrix([[1, 2], [1, 2, 3]])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.integers(0, 4), min_size=7, max_size=7), min_size=1, max_size=6))
def test_similarity_invariants(parts):
    z = similarity_matrix(parts)
    np.testing.assert_array_equal(z, z.T)
    np.testing.assert_array_equal(np.diag(z), 1.0)
    assert np.all((z >= 0) & (z <= 1))


def test_similarity_subsample():
    parts = [np.random.default_rng(i).integers(0, 3, 50) for i in range(5)]
    idx = subsample_indices(50, 10, np.random.default_rng(0))
    assert len(np.unique(idx)) == 10
    np.testing.assert_array_equal(similarity_matrix(parts, idx),
                                  similarity_matrix(parts)[np.ix_(idx, idx)])
    assert SUBSAMPLE_THRESHOLD == 20_000


def test_binder_examples():
    labels, loss = binder_point_estimate([[1, 1, 2], [1, 2, 2]])
    np.testing.assert_array_equal(labels, [1, 1, 2])
    assert loss == pytest.approx(1.0)
    np.testing.assert_allclose(binder_losses([[1, 1, 2], [1, 2, 2]]), [1.0, 1.0])
    labels, loss = binder_point_estimate([[2, 2, 1]] * 3)
    np.testing.assert_array_equal(labels, [1, 1, 2])
    assert loss == 0.0
    # a relabelled copy scores the same loss
    _, a = binder_point_estimate([[1, 1, 2], [2, 2, 1], [1, 2, 3]])
    _, b = binder_point_estimate([[2, 2, 1], [1, 1, 2], [1, 2, 3]])
    assert a == pytest.approx(b, abs=1e-12)


def test_binder_exhaustive_small():
    # every ordered pair and triple of partitions of 3 and 4 elements
    for n in (3, 4):
        all_parts = list(set_partitions(n))
        for m in (1, 2, 3):
            for combo in itertools.product(range(len(all_parts)), repeat=m):
                parts = [all_parts[i] for i in combo]
                brute = np.array([brute_binder(p, parts) for p in parts])
                np.testing.assert_allclose(binder_losses(parts), brute, atol=1e-12)
                np.testing.assert_allclose(binder_losses(parts, similarity_matrix(parts)),
                                           brute, atol=1e-12)
                labels, loss = binder_point_estimate(parts)
                best = int(np.argmax(brute <= brute.min() + 1e-9))
                np.testing.assert_array_equal(labels, canonical_labels(parts[best]))
                assert loss <= brute.min() + 1e-12


def test_binder_random_up_to_eight():
    rng = np.random.default_rng(5)
    for n in range(5, 9):
        all_parts = list(set_partitions(n))
        for _ in range(25):
            m = int(rng.integers(1, 11))
            parts = [all_parts[i] for i in rng.integers(0, len(all_parts), m)]
            brute = np.array([brute_binder(p, parts) for p in parts])
            labels, loss = binder_point_estimate(parts)
            assert loss == pytest.approx(brute.min(), abs=1e-12)
            np.testing.assert_array_equal(labels, canonical_labels(parts[int(np.argmax(brute <= brute.min() + 1e-9))]))


# --- F-measure ---------------------------------------------------------------------

def test_f_pair_examples():
    assert f_measure_pair({1, 2}, {1, 2}) == 1.0
    assert f_measure_pair({1}, {2}) == 0.0
    assert f_measure_pair({1}, {1, 2}) == pytest.approx(2 / 3)
    with pytest.raises(ConfigError):
        f_measure_pair(set(), {1})


def test_f_total_examples():
    ref = [1, 1, 2]
    pred = [1, 2, 2]
    assert f_measure_total(pred, ref) == pytest.approx(2 / 3, abs=1e-15)
    assert f_measure_total([5, 5, 9], ref) == 1.0
    # one giant predicted cluster against reference sizes (a, b)
    a, b = 7, 3
    ref2 = [1] * a + [2] * b
    closed = (a * 2 * a / (a + b + a) + b * 2 * b / (a + b + b)) / (a + b)
    assert f_measure_total([1] * (a + b), ref2) == pytest.approx(closed, abs=1e-15)


def test_f_total_asymmetric_witness():
    # the 2/3 example is symmetric, so a different pair is needed
    assert f_measure_total([1, 2, 2], [1, 1, 2]) == pytest.approx(
        f_measure_total([1, 1, 2], [1, 2, 2]))
    pred, ref = [1, 1, 1], [1, 1, 2]
    assert f_measure_total(pred, ref) == pytest.approx(0.7, abs=1e-15)
    assert f_measure_total(ref, pred) == pytest.approx(0.8, abs=1e-15)


def test_f_total_exhaustive_up_to_five():
    for n in range(1, 6):
        parts = list(set_partitions(n))
        for pred in parts:
            for ref in parts:
                got = f_measure_total(pred, ref)
                assert got == pytest.approx(brute_f_total(pred, ref), abs=1e-12)
                assert (got == pytest.approx(1.0, abs=1e-12)) == np.array_equal(pred, ref)
                for p in range(1, n + 2):
                    brute = brute_limited_f(pred, ref, p)
                    if brute is None:
                        with pytest.raises(UndefinedMetricError):
                            limited_f_measure(pred, ref, p)
                    else:
                        assert limited_f_measure(pred, ref, p) == pytest.approx(brute, abs=1e-12)


def test_f_total_random_fifty():
    rng = np.random.default_rng(11)
    for _ in range(100):
        pred = rng.integers(0, rng.integers(1, 12), 50)
        ref = rng.integers(0, rng.integers(1, 12), 50)
        assert f_measure_total(pred, ref) == pytest.approx(brute_f_total(pred, ref), abs=1e-12)
        p = int(rng.integers(2, 30))
        brute = brute_limited_f(pred, ref, p)
        if brute is None:
            with pytest.raises(UndefinedMetricError):
                limited_f_measure(pred, ref, p)
        else:
            assert limited_f_measure(pred, ref, p) == pytest.approx(brute, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=30),
       st.permutations(list(range(5))), st.permutations(list(range(5))))
def test_metrics_relabel_invariant(pairs, perm_a, perm_b):
    pred = np.array([a for a, _ in pairs])
    ref = np.array([b for _, b in pairs])
    pred2 = np.array(perm_a)[pred]
    ref2 = np.array(perm_b)[ref]
    assert f_measure_total(pred, ref) == pytest.approx(f_measure_total(pred2, ref2), abs=1e-12)
    sizes = np.bincount(ref)
    p = int(sizes[sizes > 0].min()) + 1
    assert limited_f_measure(pred, ref, p) == pytest.approx(limited_f_measure(pred2, ref2, p),
                                                            abs=1e-12)


def test_limited_f_examples():
    ref = [1, 1, 1, 1, 2]
    pred = [1, 1, 1, 1, 1]
    assert limited_f_measure(pred, ref, 2) == pytest.approx((4 * 8 / 9 + 1 / 3) / 5, abs=1e-15)
    assert round(limited_f_measure(pred, ref, 2), 4) == 0.7778
    assert limited_f_measure(pred, ref, 6) == pytest.approx(f_measure_total(pred, ref))
    assert limited_f_measure(ref, ref, 2) == 1.0
    with pytest.raises(UndefinedMetricError):
        limited_f_measure(pred, ref, 1)


def test_f_point_estimate():
    a, b = [1, 1, 2, 2], [1, 2, 3, 4]
    np.testing.assert_array_equal(f_point_estimate([a, a, b]), [1, 1, 2, 2])
    np.testing.assert_array_equal(f_point_estimate([[2, 2, 1, 1], a, b]), [1, 1, 2, 2])
    np.testing.assert_array_equal(f_point_estimate([b, b]), [1, 2, 3, 4])
    with pytest.raises(ConfigError):
        f_point_estimate([a])
    f = f_measure_matrix([a, b, a])
    np.testing.assert_array_equal(np.diag(f), 1.0)
    assert f[0, 1] == pytest.approx(f_measure_total(a, b))
    assert f[1, 0] == pytest.approx(f_measure_total(b, a))


def test_contingency_and_canonical():
    np.testing.assert_array_equal(canonical_labels([7, 7, 3, 9, 3]), [1, 1, 2, 3, 2])
    np.testing.assert_array_equal(contingency([1, 1, 2], [5, 6, 6]), [[1, 1], [0, 1]])
