"""Cluster enumeration, Ursell weights, truncated series with tail bounds."""

import itertools
import math
from fractions import Fraction

import pytest

from trifree.cluster import (TruncatedSeries, cluster_series_coeffs,
                             enumerate_clusters, eval_coeffs,
                             penrose_bound_check, spanning_tree_count,
                             truncated_log_Z, ursell)
from trifree.defect import DefectState, log_ratio_series
from trifree.graph import Graph, Partition, all_pairs
from trifree.oracle import exact_hardcore_Z
from trifree.rng import stream


def random_bounded_degree_graph(n, max_deg, rng):
    g = Graph(n)
    pairs = list(all_pairs(n))
    rng.shuffle(pairs)
    for i, j in pairs:
        if rng.random() < 0.5:
            continue
        if len(list(g.neighbors(i))) < max_deg and \
                len(list(g.neighbors(j))) < max_deg:
            g.add_edge(i, j)
    return g


def test_ursell_singleton():
    assert ursell(Graph(1), (0,)) == 1


def test_ursell_pair():
    k2 = Graph.from_edges(2, [(0, 1)])
    assert ursell(k2, (0, 0)) == Fraction(-1, 2)
    assert ursell(k2, (0, 1)) == Fraction(-1, 2)


def test_ursell_size_three_shapes():
    # incompatibility triangle vs path
    assert ursell(Graph(1), (0, 0, 0)) == Fraction(1, 3)
    p3 = Graph.from_edges(3, [(0, 1), (1, 2)])
    assert ursell(p3, (0, 1, 2)) == Fraction(1, 6)
    k3 = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    assert ursell(k3, (0, 1, 2)) == Fraction(1, 3)


def test_ursell_rejects_disconnected():
    g = Graph(2)
    with pytest.raises(ValueError):
        ursell(g, (0, 1))


def test_ursell_order_invariance():
    rng = stream(43, "ursell-perm")
    hosts = [Graph.from_edges(3, [(0, 1), (1, 2)]),
             Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)])]
    for host in hosts:
        for tup in [(0, 1, 1), (0, 1, 2), (0, 0, 1)]:
            vals = {ursell(host, perm)
                    for perm in set(itertools.permutations(tup))
                    if _connected_tuple(host, perm)}
            assert len(vals) == 1


def _connected_tuple(host, tup):
    try:
        ursell(host, tup)
        return True
    except ValueError:
        return False


def test_enumerate_edgeless_host():
    g = Graph(3)
    tups = list(enumerate_clusters(g, (1,), 3))
    assert tups == [(1,), (1, 1), (1, 1, 1)]


def test_enumerate_k2_host():
    k2 = Graph.from_edges(2, [(0, 1)])
    tups = list(enumerate_clusters(k2, (0,), 2))
    assert sorted(tups, key=lambda t: (len(t), t)) == \
        [(0,), (0, 0), (0, 1), (1, 0)]


def test_enumerate_each_exactly_once():
    rng = stream(47, "cluster-dedup")
    for _ in range(10):
        host = random_bounded_degree_graph(5, 3, rng)
        tups = list(enumerate_clusters(host, (0,), 4))
        assert len(tups) == len(set(tups))
        for tup in tups:
            assert 0 in tup
            ursell(host, tup)  # connected by construction


def test_enumerate_growth_envelope():
    # size-k cluster count through a fixed vertex stays within the
    # k!(2e)^k Delta^{k-1} envelope that certifies the tail bounds
    rng = stream(53, "cluster-growth")
    for _ in range(5):
        host = random_bounded_degree_graph(6, 3, rng)
        delta = max(1, host.max_degree())
        by_size = {}
        for tup in enumerate_clusters(host, (0,), 4):
            by_size[len(tup)] = by_size.get(len(tup), 0) + 1
        for k, cnt in by_size.items():
            envelope = math.factorial(k) * (2 * math.e) ** k * delta ** (k - 1)
            assert cnt <= envelope


def test_single_vertex_series_is_log1p_taylor():
    # partial sums match the Taylor polynomial of log(1+lam) exactly
    host = Graph(1)
    coeffs = cluster_series_coeffs(host, 6)
    for k in range(1, 7):
        assert coeffs[k] == Fraction((-1) ** (k + 1), k)
    lam = Fraction(1, 5)
    want = sum(Fraction((-1) ** (k + 1), k) * lam ** k for k in range(1, 4))
    ts = truncated_log_Z(host, lam, kmax=3)
    assert ts.partial == want


def test_k2_series_matches_log1p2_taylor():
    host = Graph.from_edges(2, [(0, 1)])
    coeffs = cluster_series_coeffs(host, 2)
    assert coeffs[1] == 2
    assert coeffs[2] == -2
    lam = 0.05
    ts = truncated_log_Z(host, lam, kmax=2)
    assert abs(ts.partial - (2 * lam - 2 * lam ** 2)) < 1e-12


def test_eval_coeffs_polynomial():
    coeffs = {1: Fraction(2), 2: Fraction(-2)}
    lam = Fraction(1, 10)
    assert eval_coeffs(coeffs, lam) == 2 * lam - 2 * lam ** 2


def test_truncated_log_Z_certificate_region():
    host = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
    delta = host.max_degree()
    edge = 1 / (2 * math.e * (delta + 1))
    assert truncated_log_Z(host, edge * 0.99, kmax=3).certificate_valid
    assert not truncated_log_Z(host, edge * 1.01, kmax=3).certificate_valid


def test_truncated_log_Z_within_tail():
    # random bounded-degree hosts, certified activity, k in {2,3,4}
    rng = stream(59, "tail-fuzz")
    lam = 1 / (10 * math.e)
    for _ in range(30):
        n = int(rng.integers(2, 8))
        host = random_bounded_degree_graph(n, 4, rng)
        exact = math.log(float(exact_hardcore_Z(host, lam)))
        for k in (2, 3, 4):
            ts = truncated_log_Z(host, lam, kmax=k)
            assert ts.certificate_valid
            assert abs(ts.partial - exact) <= ts.tail_bound
            lo, hi = ts.bounds()
            assert lo <= exact <= hi


def test_tail_bound_shrinks_with_order():
    host = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    lam = 1 / (10 * math.e)
    tails = [truncated_log_Z(host, lam, kmax=k).tail_bound for k in (2, 3, 4)]
    assert tails[0] > tails[1] > tails[2] > 0


def test_log_ratio_empty_state_closed_form():
    # adding one intra-A pair to the empty state turns the product graph
    # into a |B|-edge matching: exact ratio |B| log((1+2l)/(1+l)^2)
    lam = 0.05
    for nb in (2, 4):
        part = Partition(2 + nb, (0, 1), tuple(range(2, 2 + nb)))
        d = DefectState(part, cap=1)
        ts = log_ratio_series(d, (0, 1), lam, kmax=2)
        assert abs(ts.partial - (-lam ** 2 * nb)) < 1e-9
        exact = nb * math.log((1 + 2 * lam) / (1 + lam) ** 2)
        assert abs(ts.partial - exact) <= ts.tail_bound
        ts4 = log_ratio_series(d, (0, 1), lam, kmax=4)
        assert abs(ts4.partial - exact) <= ts4.tail_bound
        assert ts4.tail_bound < ts.tail_bound


def test_log_ratio_vanishes_quadratically():
    part = Partition(4, (0, 1), (2, 3))
    d = DefectState(part, cap=1)
    vals = []
    for lam in (0.04, 0.02, 0.01):
        ts = log_ratio_series(d, (0, 1), lam, kmax=2)
        vals.append(ts.partial)
    assert abs(vals[1] / vals[0] - 0.25) < 0.05
    assert abs(vals[2] / vals[1] - 0.25) < 0.05


def test_log_ratio_random_defects_within_tail():
    # degree-capped random defect states at |A| = |B| = 4
    rng = stream(61, "ratio-fuzz")
    lam = 0.04
    part = Partition(8, (0, 1, 2, 3), (4, 5, 6, 7))
    pairs = part.intra_pairs()
    for _ in range(20):
        d = DefectState(part, cap=1)
        for i, j in pairs:
            if rng.random() < 0.3 and d.g.triangles_through(i, j) == 0:
                d.g.add_edge(i, j)
                if d.g.max_degree() > 1:
                    d.g.remove_edge(i, j)
        free = [e for e in pairs if not d.g.has_edge(*e)]
        e = free[int(rng.integers(len(free)))]
        d.g.add_edge(*e)
        bad = d.g.triangles_through(*e) > 0 or d.g.max_degree() > 1
        d.g.remove_edge(*e)
        if bad:
            continue
        ts = log_ratio_series(d, e, lam, kmax=4)
        with_g = d.g.copy()
        with_g.add_edge(*e)
        z_without = float(exact_hardcore_Z(
            d.product_view().materialize(), lam))
        d2 = DefectState(part, cap=1, g=with_g)
        z_with = float(exact_hardcore_Z(d2.product_view().materialize(), lam))
        exact = math.log(z_with / z_without)
        assert abs(ts.partial - exact) <= ts.tail_bound + 1e-12


def test_spanning_tree_counts():
    assert spanning_tree_count(Graph.from_edges(2, [(0, 1)])) == 1
    k3 = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    assert spanning_tree_count(k3) == 3
    c4 = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    assert spanning_tree_count(c4) == 4
    k4 = Graph.from_edges(4, list(all_pairs(4)))
    assert spanning_tree_count(k4) == 16
    path = Graph.from_edges(5, [(i, i + 1) for i in range(4)])
    assert spanning_tree_count(path) == 1


def test_penrose_single_edge():
    assert penrose_bound_check(Graph.from_edges(2, [(0, 1)])) == (1, 1, True)


def test_penrose_triangle():
    k3 = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    assert penrose_bound_check(k3) == (2, 3, True)


def test_penrose_c4():
    c4 = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    signed, trees, ok = penrose_bound_check(c4)
    assert trees == 4
    assert ok and signed <= trees


def test_penrose_random_connected():
    rng = stream(67, "penrose-fuzz")
    done = 0
    while done < 300:
        n = int(rng.integers(2, 8))
        g = Graph(n)
        for i, j in all_pairs(n):
            if rng.random() < 0.5:
                g.add_edge(i, j)
        try:
            signed, trees, ok = penrose_bound_check(g)
        except ValueError:
            continue  # disconnected draw
        assert ok and signed <= trees
        done += 1
