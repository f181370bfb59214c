"""Exact small-n references: enumeration, partition functions, distributions."""

import math
from fractions import Fraction
from math import comb

import numpy as np
import pytest

from trifree.graph import Graph, Partition, all_pairs
from trifree.oracle import (BudgetError, ExactDistribution, MAX_ENUM_N,
                            admissible_imbalances,
                            calibrated_tv, defect_states, exact_Z,
                            exact_conditioned_probability, exact_defect_Z,
                            exact_hardcore_Z, exact_hardcore_distribution,
                            exact_mu, exact_nu, exact_weak_count,
                            independent_set_masks, triangle_free_masks,
                            triangle_masks, tv_distance, tv_noise_floor)
from trifree.rng import stream


def test_exact_Z_small_closed_forms():
    lam = Fraction(2, 7)
    assert exact_Z(1, lam) == 1
    assert exact_Z(2, lam) == 1 + lam
    assert exact_Z(3, lam) == 1 + 3 * lam + 3 * lam ** 2
    assert exact_Z(3, lam) == (1 + lam) ** 3 - lam ** 3


def test_exact_Z_matches_mask_enumeration():
    for n in (2, 3, 4, 5):
        masks = triangle_free_masks(n)
        lam = Fraction(1, 3)
        want = sum(lam ** int(m).bit_count() for m in masks)
        assert exact_Z(n, lam) == want


def test_triangle_free_mask_counts():
    assert len(triangle_free_masks(3)) == 7
    for n in (3, 4, 5):
        tri = triangle_masks(n)
        assert len(tri) == comb(n, 3)
        for mask in triangle_free_masks(n):
            assert all(mask & t != t for t in tri)
        assert exact_Z(n, 1) == len(triangle_free_masks(n))


def test_enumeration_budget():
    with pytest.raises(BudgetError):
        triangle_free_masks(MAX_ENUM_N + 1)
    with pytest.raises(BudgetError):
        exact_mu(MAX_ENUM_N + 1, 0.1)


def test_conditioned_probability_n3():
    for p in (Fraction(1, 10), Fraction(1, 2), Fraction(3, 4)):
        assert exact_conditioned_probability(3, p) == 1 - p ** 3


def test_conditioned_probability_identity():
    # Z(lam)*(1-p)^C(n,2) with lam = p/(1-p), bit-exact in rationals
    for n in range(2, 7):
        for p in (Fraction(1, 5), Fraction(2, 5)):
            lam = p / (1 - p)
            want = exact_Z(n, lam) * (1 - p) ** comb(n, 2)
            assert exact_conditioned_probability(n, p) == want


def test_conditioned_probability_direct_sum():
    # binomial measure restricted to the triangle-free masks
    n, p = 5, Fraction(1, 4)
    m = comb(n, 2)
    want = sum(p ** int(x).bit_count() * (1 - p) ** (m - int(x).bit_count())
               for x in triangle_free_masks(n))
    assert exact_conditioned_probability(n, p) == want


def test_exact_mu_distribution():
    n, p = 3, 0.3
    dist = exact_mu(n, p)
    lam = p / (1 - p)
    z = 1 + 3 * lam + 3 * lam ** 2
    probs = dict(zip(dist.states, dist.probs))
    assert len(probs) == 7
    assert abs(sum(dist.probs) - 1) < 1e-12
    assert abs(probs[0] - 1 / z) < 1e-12
    for mask, q in probs.items():
        k = int(mask).bit_count()
        assert abs(q - lam ** k / z) < 1e-12


def test_exact_hardcore_Z_closed_forms():
    lam = Fraction(1, 4)
    k2 = Graph.from_edges(2, [(0, 1)])
    assert exact_hardcore_Z(k2, lam) == 1 + 2 * lam
    empty = Graph(5)
    assert exact_hardcore_Z(empty, lam) == (1 + lam) ** 5
    c4 = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    assert exact_hardcore_Z(c4, lam) == 1 + 4 * lam + 2 * lam ** 2
    p4 = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
    assert exact_hardcore_Z(p4, lam) == 1 + 4 * lam + 3 * lam ** 2


def test_independent_set_counts_path():
    # path on m vertices has Fibonacci-many independent sets
    counts = [2, 3, 5, 8, 13, 21, 34]
    for m in range(1, 8):
        g = Graph.from_edges(m, [(i, i + 1) for i in range(m - 1)])
        assert len(independent_set_masks(g)) == counts[m - 1]


def test_independent_set_masks_are_independent():
    rng = stream(31, "indep-masks")
    for _ in range(30):
        n = int(rng.integers(2, 8))
        g = Graph(n)
        for i, j in all_pairs(n):
            if rng.random() < 0.5:
                g.add_edge(i, j)
        for mask in independent_set_masks(g):
            occ = [v for v in range(n) if mask >> v & 1]
            for x in range(len(occ)):
                for y in range(x + 1, len(occ)):
                    assert not g.has_edge(occ[x], occ[y])
        assert len(independent_set_masks(g)) == exact_hardcore_Z(g, 1)


def test_exact_nu_cap0_point_mass():
    part = Partition(4, (0, 1), (2, 3))
    lam = Fraction(1, 3)
    dist = exact_nu(part, lam, cap=0)
    assert len(dist.states) == 1
    assert dist.probs[0] == 1
    assert exact_defect_Z(part, lam, cap=0) == (1 + lam) ** 4


def test_exact_nu_two_by_two_cap1():
    # four states: product graphs are edgeless, 2-matching, 2-matching, C4
    part = Partition(4, (0, 1), (2, 3))
    lam = Fraction(2, 5)
    weights = {
        (frozenset(), frozenset()): (1 + lam) ** 4,
        (frozenset([(0, 1)]), frozenset()): lam * (1 + 2 * lam) ** 2,
        (frozenset(), frozenset([(2, 3)])): lam * (1 + 2 * lam) ** 2,
        (frozenset([(0, 1)]), frozenset([(2, 3)])):
            lam ** 2 * (1 + 4 * lam + 2 * lam ** 2),
    }
    total = sum(weights.values())
    assert exact_defect_Z(part, lam, cap=1) == total
    dist = exact_nu(part, lam, cap=1)
    assert len(dist.states) == 4
    got = dict(zip(dist.states, dist.probs))
    for key, w in weights.items():
        assert abs(got[key] - float(w / total)) < 1e-12


def test_exact_nu_lam0_point_mass():
    part = Partition(6, (0, 1, 2), (3, 4, 5))
    dist = exact_nu(part, Fraction(0), cap=2)
    probs = dict(zip(dist.states, dist.probs))
    assert probs[(frozenset(), frozenset())] == 1
    assert all(q == 0 for s, q in probs.items()
               if s != (frozenset(), frozenset()))


def test_defect_states_respect_cap():
    part = Partition(6, (0, 1, 2), (3, 4, 5))
    for cap in (0, 1, 2):
        for s, t in defect_states(part, cap):
            g = Graph.from_edges(6, list(s) + list(t))
            assert g.is_triangle_free()
            assert g.max_degree() <= cap
    assert len(defect_states(part, 0)) == 1


def test_defect_Z_by_double_enumeration():
    # directly summing lam^{|G|} over triangle-free graphs whose intra-part
    # subgraphs fit the cap must reproduce sum lam^{|S|+|T|} Z_{S x T}(lam)
    part = Partition(5, (0, 1, 2), (3, 4))
    lam = Fraction(1, 2)
    cross = [(a, b) for a in part.A for b in part.B]
    direct = Fraction(0)
    for s, t in defect_states(part, cap=1):
        base = list(s) + list(t)
        for sub in range(1 << len(cross)):
            chosen = [cross[i] for i in range(len(cross)) if sub >> i & 1]
            g = Graph.from_edges(5, base + chosen)
            if g.is_triangle_free():
                direct += lam ** g.edge_count()
    assert direct == exact_defect_Z(part, lam, cap=1)


def test_tv_distance_basics():
    d = exact_mu(3, 0.2)
    assert tv_distance(d, dict(zip(d.states, d.probs))) < 1e-12
    point = {d.states[0]: 1.0}
    want = 1 - dict(zip(d.states, d.probs))[d.states[0]]
    assert abs(tv_distance(d, point) - want) < 1e-12
    other = {"far": 1.0}
    assert abs(tv_distance(d, other) - 1) < 1e-12


def test_tv_distance_uniform_vs_point():
    two = ExactDistribution(states=["a", "b"], probs=[0.5, 0.5])
    assert abs(tv_distance(two, {"a": 1.0}) - 0.5) < 1e-12


def test_tv_noise_floor_properties():
    d = exact_mu(4, 0.2)
    rng = stream(37, "floor")
    small = tv_noise_floor(d, 200, rng)
    big = tv_noise_floor(d, 20000, rng)
    assert 0 < big < small < 1


def test_calibrated_tv_orders():
    d = exact_mu(4, 0.2)
    rng = stream(41, "calib")
    counts = {}
    for _ in range(2000):
        x = d.states[int(rng.choice(len(d.states), p=np.asarray(d.probs)))]
        counts[x] = counts.get(x, 0) + 1
    raw, floor, corrected = calibrated_tv(d, counts, rng)
    assert raw >= 0 and floor >= 0
    assert corrected == max(0.0, raw - floor)
    assert raw <= 0.1


def test_admissible_imbalances():
    assert admissible_imbalances(6) == [0]
    assert admissible_imbalances(8) == [0]
    assert admissible_imbalances(20) == [0, 2]
    assert admissible_imbalances(25) == [1]
    assert admissible_imbalances(4, max_imbalance=2) == [0, 2]
    assert admissible_imbalances(5, max_imbalance=3) == [1, 3]


def test_exact_weak_count_cap0():
    # cap=0 collapses every partition to (1+lam)^{|A||B|}
    lam = Fraction(1, 2)
    total, per_k = exact_weak_count(4, lam, cap=0, max_imbalance=2)
    assert per_k[0] == (1 + lam) ** 4
    assert per_k[2] == (1 + lam) ** 3
    assert total == 6 * per_k[0] + 4 * per_k[2]


def test_exact_weak_count_lam0():
    total, per_k = exact_weak_count(6, Fraction(0), cap=1)
    assert per_k == {0: 1}
    assert total == 20


def test_exact_weak_count_partition_invariance():
    # every partition at a given imbalance contributes the same defect Z
    lam = Fraction(1, 3)
    n = 6
    vals = set()
    import itertools
    for A in itertools.combinations(range(n), 3):
        B = tuple(v for v in range(n) if v not in A)
        vals.add(exact_defect_Z(Partition(n, A, B), lam, cap=1))
    assert len(vals) == 1
    total, per_k = exact_weak_count(n, lam, cap=1)
    assert per_k[0] == vals.pop()
    assert total == comb(6, 3) * per_k[0]


def test_hardcore_distribution_normalized():
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    dist = exact_hardcore_distribution(g, 0.25)
    assert abs(sum(dist.probs) - 1) < 1e-12
    probs = dict(zip(dist.states, dist.probs))
    z = 1 + 4 * 0.25 + 2 * 0.25 ** 2
    assert abs(probs[0] - 1 / z) < 1e-12
