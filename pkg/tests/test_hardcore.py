"""Hard-core sampling and annealed partition-function estimation."""

import math

import numpy as np
import pytest

from trifree.graph import Graph, Partition
from trifree.hardcore import (IndependentSetState, hc_burn_in,
                              hc_estimate_Z, hc_glauber_step, hc_sample)
from trifree.oracle import (exact_hardcore_Z, exact_hardcore_distribution,
                            product_view, tv_distance)
from trifree.rng import stream

C4 = [(0, 1), (1, 2), (2, 3), (0, 3)]
P4 = [(0, 1), (1, 2), (2, 3)]


def occ_mask(occupied):
    m = 0
    for v in occupied:
        m |= 1 << v
    return m


def test_burn_in_formula():
    for nv, eps, K in ((4, 0.001, 8.0), (16, 0.05, 8.0), (9, 0.2, 3.0)):
        assert hc_burn_in(nv, eps, K) == \
            math.ceil(K * nv * (math.log(nv + 1) + math.log(1 / eps)))
    assert hc_burn_in(0, 0.1) == 0


def test_step_lam0_empties():
    host = Graph.from_edges(4, C4)
    s = IndependentSetState(host, occupied=(0, 2))
    rng = stream(7, "hc-zero")
    for _ in range(200):
        hc_glauber_step(s, 0.0, rng)
        assert s.is_independent()
    assert s.count == 0


def test_step_single_vertex_occupancy():
    host = Graph(1)
    s = IndependentSetState(host)
    rng = stream(11, "hc-single")
    lam = 0.6
    hits = 0
    n_steps = 20000
    for _ in range(n_steps):
        hc_glauber_step(s, lam, rng)
        hits += s.count
    frac = hits / n_steps
    want = lam / (1 + lam)
    assert abs(frac - want) <= 3 * math.sqrt(want * (1 - want) / n_steps) + 0.01


def test_step_preserves_independence():
    rng = stream(13, "hc-indep")
    host = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)])
    s = IndependentSetState(host)
    for _ in range(20000):
        hc_glauber_step(s, 0.5, rng)
        if len(s.occupied) >= 2:
            assert s.is_independent()


def test_c4_per_vertex_occupancy():
    # long single run; marginal lam(1+lam)/Z per vertex by symmetry
    host = Graph.from_edges(4, C4)
    lam = 0.25
    z = 1 + 4 * lam + 2 * lam ** 2
    want = lam * (1 + lam) / z
    s = IndependentSetState(host)
    rng = stream(17, "hc-c4")
    hits = np.zeros(4)
    n_steps = 100000
    for _ in range(n_steps):
        hc_glauber_step(s, lam, rng)
        for v in s.occupied:
            hits[v] += 1
    for v in range(4):
        assert abs(hits[v] / n_steps - want) <= 0.01


def test_hc_sample_k2_tv():
    host = Graph.from_edges(2, [(0, 1)])
    lam = 0.4
    dist = exact_hardcore_distribution(host, lam)
    rng = stream(19, "hc-k2")
    counts = {}
    for _ in range(10000):
        occ = hc_sample(host, lam, seed=int(rng.integers(2 ** 31)))
        m = occ_mask(occ)
        counts[m] = counts.get(m, 0) + 1
    assert tv_distance(dist, counts) <= 0.02
    # closed form: P(empty)=1/(1+2lam), each singleton lam/(1+2lam)
    assert abs(counts[0] / 10000 - 1 / (1 + 2 * lam)) < 0.02


def test_hc_sample_edgeless_product_measure():
    host = Graph(6)
    lam = 0.5
    q = lam / (1 + lam)
    rng = stream(23, "hc-edgeless")
    per_vertex = np.zeros(6)
    n_samples = 3000
    for _ in range(n_samples):
        occ = hc_sample(host, lam, seed=int(rng.integers(2 ** 31)))
        for v in occ:
            per_vertex[v] += 1
    se = math.sqrt(q * (1 - q) / n_samples)
    for v in range(6):
        assert abs(per_vertex[v] / n_samples - q) <= 3 * se + 0.01


def test_hc_sample_on_product_view():
    # S = one A-side edge, T empty: the product graph is a |B|-matching,
    # so occupied pairs never share a T-column
    part = Partition(4, (0, 1), (2, 3))
    view = product_view(part, [(0, 1)], [])
    rng = stream(29, "hc-view")
    for _ in range(300):
        occ = hc_sample(view, 0.3, seed=int(rng.integers(2 ** 31)))
        cols = [b for _, b in occ]
        assert len(cols) == len(set(cols))


def test_hc_sample_respects_independence():
    rng = stream(31, "hc-sample-indep")
    host = Graph.from_edges(5, [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4)])
    for _ in range(200):
        occ = hc_sample(host, 0.4, seed=int(rng.integers(2 ** 31)))
        occ = sorted(occ)
        for i, u in enumerate(occ):
            for v in occ[i + 1:]:
                assert not host.has_edge(u, v)


def test_estimate_Z_edgeless_closed_form():
    host = Graph(8)
    lam = 0.3
    est = hc_estimate_Z(host, lam, eps=0.05, delta=0.1, seed=3)
    assert abs(est.log_value - 8 * math.log(1 + lam)) <= 0.05


def test_estimate_Z_c4():
    host = Graph.from_edges(4, C4)
    est = hc_estimate_Z(host, 0.25, eps=0.05, delta=0.1, seed=5)
    assert abs(est.log_value - math.log(2.125)) <= 0.05
    assert est.value == pytest.approx(math.exp(est.log_value))


def test_estimate_Z_p4_repeated_failure_rate():
    # eps=0.05, delta=0.1: observed miss fraction stays within delta
    host = Graph.from_edges(4, P4)
    lam = 0.3
    exact = math.log(float(exact_hardcore_Z(host, lam)))
    fails = 0
    reps = 200
    for r in range(reps):
        est = hc_estimate_Z(host, lam, eps=0.05, delta=0.1, seed=1000 + r)
        if abs(est.log_value - exact) > 0.05:
            fails += 1
    assert fails / reps <= 0.1


def test_estimate_Z_refinement_consistency():
    # halving eps keeps the estimate inside the previous combined interval
    host = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    lam = 0.2
    misses = 0
    for r in range(20):
        wide = hc_estimate_Z(host, lam, eps=0.2, delta=0.05, seed=50 + r)
        tight = hc_estimate_Z(host, lam, eps=0.1, delta=0.05, seed=950 + r)
        if abs(tight.log_value - wide.log_value) > 0.2 + 0.1:
            misses += 1
    assert misses <= 2


def test_estimate_Z_self_consistency():
    # independent repetitions agree within combined error bars
    host = Graph.from_edges(4, C4)
    lam = 0.25
    runs = [hc_estimate_Z(host, lam, eps=0.08, delta=0.05, seed=300 + r)
            for r in range(50)]
    exact = math.log(float(exact_hardcore_Z(host, lam)))
    inside = sum(1 for e in runs if abs(e.log_value - exact) <= 0.08)
    assert inside >= 45
    spread = max(e.log_value for e in runs) - min(e.log_value for e in runs)
    assert spread <= 2 * 0.08 + 0.05


def test_estimate_reports_metadata():
    host = Graph.from_edges(4, P4)
    est = hc_estimate_Z(host, 0.2, eps=0.1, delta=0.1, seed=9)
    assert est.eps == 0.1 and est.delta == 0.1
    assert est.n_rungs >= 1 and est.n_samples > 0
