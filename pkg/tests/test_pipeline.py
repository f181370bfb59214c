"""End-to-end structured sampler and the two counting estimators, checked
against closed forms and the exact enumeration oracles at small n."""

import math
from itertools import combinations

import numpy as np
import pytest

from trifree.defect import DefectState, HighDensityConfig
from trifree.graph import Graph, Partition
from trifree.hardcore import hc_sample
from trifree.oracle import (
    ExactDistribution,
    calibrated_tv,
    exact_conditioned_probability,
    exact_hardcore_distribution,
    exact_nu,
    exact_weak_count,
)
from trifree.pipeline import (
    ImbalanceTable,
    PipelineStageError,
    SampleRecord,
    build_imbalance_table,
    count_high,
    count_low,
    sample_high,
    sample_imbalance,
)
from trifree.rng import stream

PART8 = Partition(8, tuple(range(4)), tuple(range(4, 8)))


def cfg8(**kw):
    # C lowered so n = 8 counts as in-regime and does not warn
    kw.setdefault("C", 0.5)
    kw.setdefault("cap", 1)
    return HighDensityConfig(n=8, lam=0.3, **kw)


def test_imbalance_table_lam_zero():
    cfg = HighDensityConfig(n=6, lam=0.0, cap=0)
    table = build_imbalance_table(cfg)
    assert table.ks == (0,)
    assert all(est.exact for est in table.estimates)
    assert table.log_total() == pytest.approx(math.log(20), abs=1e-12)
    assert table.k_probabilities().tolist() == [1.0]


def test_imbalance_table_cap_zero_closed_form():
    lam = 0.3
    cfg = HighDensityConfig(n=4, lam=lam, cap=0, max_imbalance=2)
    table = build_imbalance_table(cfg)
    assert table.ks == (0, 2)
    want = 6 * (1 + lam) ** 4 + 4 * (1 + lam) ** 3
    assert table.log_total() == pytest.approx(math.log(want), abs=1e-12)
    total, _ = exact_weak_count(4, lam, 0, max_imbalance=2)
    assert table.log_total() == pytest.approx(math.log(float(total)),
                                              abs=1e-12)


def test_sample_imbalance_frequencies_cap_zero():
    lam = 0.3
    cfg = HighDensityConfig(n=4, lam=lam, cap=0, max_imbalance=2)
    table = build_imbalance_table(cfg)
    w0 = 6 * (1 + lam) ** 4
    w2 = 4 * (1 + lam) ** 3
    p0 = w0 / (w0 + w2)
    m = 4000
    hits = 0
    for i in range(m):
        k, part = sample_imbalance(cfg, seed=i, table=table)
        assert k in (0, 2)
        assert part.imbalance == k
        assert len(part.A) == (4 + k) // 2
        if k == 0:
            hits += 1
    se = math.sqrt(p0 * (1 - p0) / m)
    assert abs(hits / m - p0) <= 3 * se


def test_sample_imbalance_lam_zero_binom_weights():
    cfg = HighDensityConfig(n=5, lam=0.0, cap=0, max_imbalance=3)
    table = build_imbalance_table(cfg)
    assert table.ks == (1, 3)
    probs = table.k_probabilities()
    assert probs == pytest.approx([10 / 15, 5 / 15], abs=1e-12)
    m = 3000
    hits = sum(1 for i in range(m)
               if sample_imbalance(cfg, seed=i, table=table)[0] == 1)
    se = math.sqrt((2 / 3) * (1 / 3) / m)
    assert abs(hits / m - 2 / 3) <= 3 * se


def _record(s_edges, crossing):
    d = DefectState.from_side_edges(PART8, 1, s_edges, [])
    edges = list(s_edges) + [tuple(sorted(e)) for e in crossing]
    g = Graph.from_edges(8, edges)
    return SampleRecord(PART8, d, frozenset(crossing), g, {})


def test_sample_record_validate():
    good = _record([(0, 1)], {(0, 5), (2, 4)})
    good.validate()
    d = DefectState.from_side_edges(PART8, 1, [(0, 1)], [])
    g = Graph.from_edges(8, [(0, 1), (0, 5), (2, 4)])
    short = SampleRecord(PART8, d, frozenset({(0, 5)}), g, {})
    with pytest.raises(ValueError, match="disagree"):
        short.validate()
    bad = SampleRecord(PART8, DefectState(PART8, 1),
                       frozenset({(0, 4), (1, 4)}),
                       Graph.from_edges(8, [(0, 4), (1, 4), (0, 1)]), {})
    with pytest.raises(ValueError, match="triangle"):
        bad.validate()


def test_sample_record_validate_intra_mismatch():
    d = DefectState.from_side_edges(PART8, 1, [(0, 1)], [])
    g = Graph.from_edges(8, [(2, 3)])
    with pytest.raises(ValueError, match="intra-part"):
        SampleRecord(PART8, d, frozenset(), g, {}).validate()
    g2 = Graph.from_edges(8, [(0, 1), (0, 4)])
    with pytest.raises(ValueError, match="disagree"):
        SampleRecord(PART8, d, frozenset(), g2, {}).validate()


def test_sample_high_invariants_and_diagnostics():
    cfg = cfg8()
    table = build_imbalance_table(cfg, seed=0)
    for i in range(25):
        rec = sample_high(cfg, seed=i, table=table)
        rec.validate()
        assert rec.diagnostics["k"] == 0
        assert rec.diagnostics["omega"] in (True, False)
        assert rec.diagnostics["crossing_edges"] == len(rec.crossing)
        assert rec.diagnostics["defect_edges"] == rec.defects.edge_count()
        assert rec.graph.max_degree() <= 8


def test_sample_high_warns_out_of_regime():
    cfg = HighDensityConfig(n=8, lam=0.3, cap=1)
    table = build_imbalance_table(cfg, seed=0)
    with pytest.warns(RuntimeWarning, match="high-density"):
        sample_high(cfg, seed=0, table=table)


def test_sample_high_stage_errors():
    with pytest.raises(ValueError, match="at least 2"):
        sample_high(HighDensityConfig(n=1, lam=0.3, cap=0))
    # per-step budgets for sampled ratios are infeasible on a full chain
    cfg = cfg8(cap=2, mode="mcmc-ratio")
    table = build_imbalance_table(cfg8(), seed=0)
    with pytest.raises(PipelineStageError, match="defects") as exc:
        sample_high(cfg, seed=0, table=table)
    assert exc.value.stage == "defects"


def test_sample_high_joint_distribution():
    # joint law of (k, S, T): relabel the canonical exact law through all
    # 70 ordered balanced partitions, which are uniform at n = 8
    lam = 0.3
    cfg = cfg8()
    dist = exact_nu(PART8, lam, 1)
    agg: dict = {}
    for A in combinations(range(8), 4):
        B = tuple(v for v in range(8) if v not in A)
        relabel = {i: A[i] for i in range(4)}
        relabel.update({4 + j: B[j] for j in range(4)})
        for (S, T), p in zip(dist.states, dist.probs):
            key = (0,
                   frozenset(tuple(sorted((relabel[u], relabel[v])))
                             for u, v in S),
                   frozenset(tuple(sorted((relabel[u], relabel[v])))
                             for u, v in T))
            agg[key] = agg.get(key, 0.0) + p / 70.0
    exact = ExactDistribution(list(agg.keys()), list(agg.values()))
    table = build_imbalance_table(cfg, seed=0)
    hist: dict = {}
    m = 1000
    for i in range(m):
        rec = sample_high(cfg, seed=i, table=table)
        S, T = rec.defects.side_edges()
        key = (rec.diagnostics["k"], S, T)
        hist[key] = hist.get(key, 0) + 1
    raw, floor, corrected = calibrated_tv(exact, hist, stream(2, "joint-tv"))
    assert corrected <= 0.07


def test_crossing_stage_law():
    # given the defects, crossing edges follow the hard-core measure on the
    # product host
    lam = 0.3
    d = DefectState.from_side_edges(PART8, 1, [(0, 1)], [(4, 5)])
    view = d.product_view()
    host = view.materialize()
    exact = exact_hardcore_distribution(host, lam)
    nb = len(PART8.B)

    def occ_mask(crossing):
        mask = 0
        for a, b in crossing:
            mask |= 1 << (a * nb + (b - 4))
        return mask

    hist: dict = {}
    m = 3000
    for i in range(m):
        occ = hc_sample(view, lam, eps=1e-3, seed=i)
        mask = occ_mask(occ)
        hist[mask] = hist.get(mask, 0) + 1
    raw, floor, corrected = calibrated_tv(exact, hist, stream(4, "cross-tv"))
    assert corrected <= 0.05


def test_sample_high_cut_fraction_at_scale():
    # default alpha puts the cap at zero here, so all edges cross the cut
    cfg = HighDensityConfig(n=400, lam=0.25)
    assert cfg.in_regime()
    assert cfg.resolved_cap() == 0
    table = build_imbalance_table(cfg, seed=0)
    fracs = []
    for i in range(100):
        rec = sample_high(cfg, seed=i, table=table)
        assert rec.graph.edge_count() > 0
        fracs.append(rec.graph.cut_size(rec.partition)
                     / rec.graph.edge_count())
    assert np.mean(fracs) >= 0.95


def test_count_high_cap_zero_closed_form():
    lam = 0.3
    cfg = HighDensityConfig(n=5, lam=lam, cap=0, max_imbalance=3)
    est = count_high(cfg)
    assert est.exact
    m = 10 * (1 + lam) ** 6 + 5 * (1 + lam) ** 4
    p = lam / (1 + lam)
    want = math.log(m) + 10 * math.log(1 - p)
    assert est.log_value == pytest.approx(want, abs=1e-12)


def test_count_high_lam_zero_convention():
    # at lam = 0 the weak count is the bare partition sum, not 1; the
    # documented convention returns it exactly
    est = count_high(HighDensityConfig(n=6, lam=0.0, cap=0))
    assert est.exact
    assert est.log_value == pytest.approx(math.log(20), abs=1e-12)


def test_count_high_matches_oracle():
    lam = 0.3
    p = lam / (1 + lam)
    total, _ = exact_weak_count(8, lam, 1)
    truth = math.log(float(total)) + 28 * math.log(1 - p)
    cfg = HighDensityConfig(n=8, lam=lam, cap=1, mode="mcmc-ratio")
    est = count_high(cfg, eps=0.05, seed=2)
    assert abs(est.log_value - truth) <= est.eps
    assert est.delta <= 0.05 + 1e-12


def test_count_low_validation_and_trivial_cases():
    with pytest.raises(ValueError):
        count_low(6, 1.0)
    with pytest.raises(ValueError):
        count_low(6, -0.1)
    with pytest.raises(ValueError):
        count_low(6, 0.1, eps=0.0)
    with pytest.raises(ValueError):
        count_low(6, 0.1, delta=0.0)
    assert count_low(6, 0.0).exact
    assert count_low(6, 0.0).log_value == 0.0
    assert count_low(2, 0.3).log_value == 0.0


def test_count_low_n3_closed_form():
    p = 0.2
    est = count_low(3, p, eps=0.05, seed=1)
    assert abs(est.log_value - math.log(1 - p ** 3)) <= 0.05


def test_count_low_matches_oracle():
    truth = math.log(float(exact_conditioned_probability(6, 0.15)))
    for seed in (3, 4):
        est = count_low(6, 0.15, eps=0.05, seed=seed)
        assert abs(est.log_value - truth) <= 0.05


def test_count_low_warns_outside_regime():
    with pytest.warns(RuntimeWarning, match="low-density"):
        count_low(16, 0.2, eps=0.2, seed=0)


def test_z_estimates_monotone_in_lam():
    prev = None
    prev_eps = 0.0
    for lam in (0.01, 0.02, 0.04, 0.06):
        cfg = HighDensityConfig(n=6, lam=lam, cap=1)
        est = build_imbalance_table(cfg, eps=0.01, seed=4).estimates[0]
        if prev is not None:
            assert est.log_value >= prev - (prev_eps + est.eps)
        prev, prev_eps = est.log_value, est.eps


def test_cross_regime_consistency():
    # each estimator lands inside its own error bar of its own target; the
    # weak count is not the conditioned probability at small n
    lam = 0.3
    p = lam / (1 + lam)
    mu = math.log(float(exact_conditioned_probability(6, p)))
    est_low = count_low(6, p, eps=0.05, seed=9)
    assert abs(est_low.log_value - mu) <= 0.05
    total, _ = exact_weak_count(6, lam, 1)
    weak = math.log(float(total)) + 15 * math.log(1 - p)
    cfg = HighDensityConfig(n=6, lam=lam, cap=1, mode="mcmc-ratio")
    est_high = count_high(cfg, eps=0.05, seed=9)
    assert abs(est_high.log_value - weak) <= 0.05
    assert abs(weak - mu) > 1.0
