"""End-to-end samplers and counters built from the stage modules.

High-density side: sample an imbalance k proportionally to
binom(n,(n+k)/2) * Z_k(lam), a uniform partition at that imbalance, a defect
state from the partition's chain, and finally crossing edges from the
hard-core measure on the product host; the union is triangle-free by
construction. The matching counter sums the per-k estimates and converts to
a conditioned-probability estimate through the (1-p)^binom(n,2) factor.

Low-density side: the conditioned-chain annealing counter telescopes
Z(lam) = sum over triangle-free G of lam^{|G|} down an activity ladder to
the empty graph, with ratio estimates from thinned chain samples.

Partition convention: ordered pairs are collapsed to k >= 0 with weight
binom(n,(n+k)/2) taken exactly once per k; sampler and counter use the same
convention, so conditionals and ratios are unaffected by it. At lam=0 the
weak-partition count equals the plain sum of binomial weights, not 1; tests
assert that documented value.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .defect import (DefectState, HighDensityConfig, estimate_Zw,
                     omega_membership, sample_defects)
from .glauber import (DEFAULT_BURNIN_CONST, default_burn_in, pair_arrays,
                      subcritical)
from .graph import Graph, Partition
from .hardcore import LogEstimate, hc_sample
from .oracle import admissible_imbalances
from .rng import kernel_seed, stream

PILOT_SAMPLES = 300
MIN_RUNG_SAMPLES = 300


class PipelineStageError(RuntimeError):
    """Failure inside one named stage of the structured sampler."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class ImbalanceTable:
    """Per-imbalance partition-function estimates with their combinatorial
    weights: entry k carries log binom(n,(n+k)/2) and a LogEstimate of
    Z_k(lam), the defect normalizer Z_w for any partition at imbalance k."""

    n: int
    lam: float
    cap: int
    ks: tuple[int, ...]
    log_binom: tuple[float, ...]
    estimates: tuple[LogEstimate, ...]

    def log_weights(self) -> np.ndarray:
        return np.array([lb + est.log_value
                         for lb, est in zip(self.log_binom, self.estimates)])

    def log_total(self) -> float:
        return float(logsumexp(self.log_weights()))

    def k_probabilities(self) -> np.ndarray:
        w = self.log_weights()
        w = np.exp(w - w.max())
        return w / w.sum()


def _representative_partition(n: int, k: int) -> Partition:
    na = (n + k) // 2
    return Partition(n, tuple(range(na)), tuple(range(na, n)))


def build_imbalance_table(cfg: HighDensityConfig, *, eps: float = 0.05,
                          delta: float | None = None,
                          seed: int = 0) -> ImbalanceTable:
    """Estimate Z_k for every admissible imbalance. Z_k depends on the
    partition only through k, so one representative partition per k
    suffices. Per-entry failure probability defaults to min(1/n, 0.05)."""
    if delta is None:
        delta = min(1.0 / cfg.n, 0.05)
    ks = admissible_imbalances(cfg.n, cfg.max_imbalance)
    cap = cfg.resolved_cap()
    log_binom = tuple(
        float(math.lgamma(cfg.n + 1) - math.lgamma((cfg.n + k) // 2 + 1)
              - math.lgamma((cfg.n - k) // 2 + 1)) for k in ks)
    estimates = []
    for k in ks:
        part = _representative_partition(cfg.n, k)
        estimates.append(estimate_Zw(part, cfg, eps=eps, delta=delta,
                                     seed=seed))
    return ImbalanceTable(cfg.n, cfg.lam, cap, tuple(ks), log_binom,
                          tuple(estimates))


def sample_imbalance(cfg: HighDensityConfig, *, seed: int = 0,
                     table: ImbalanceTable | None = None,
                     table_eps: float = 0.05) -> tuple[int, Partition]:
    """Draw an imbalance k proportionally to binom(n,(n+k)/2)*Z_k(lam), then
    a uniform ordered partition with |A| = (n+k)/2."""
    if table is None:
        table = build_imbalance_table(cfg, eps=table_eps, seed=seed)
    rng = stream(seed, "sample-imbalance", cfg.n, cfg.lam,
                 cfg.resolved_cap(), cfg.max_imbalance)
    probs = table.k_probabilities()
    k = int(table.ks[rng.choice(len(probs), p=probs)])
    na = (cfg.n + k) // 2
    A = tuple(sorted(rng.choice(cfg.n, size=na, replace=False).tolist()))
    B = tuple(v for v in range(cfg.n) if v not in set(A))
    return k, Partition(cfg.n, A, B)


@dataclass(frozen=True)
class SampleRecord:
    """One output of the structured sampler with its intermediate stages."""

    partition: Partition
    defects: DefectState
    crossing: frozenset
    graph: Graph
    diagnostics: dict

    def validate(self) -> None:
        """Check the structural invariants: the graph is triangle-free, its
        intra-part edges are exactly the defect state, and the crossing
        edges form an independent set in the product host."""
        self.defects.validate()
        if not self.graph.is_triangle_free():
            raise ValueError("output graph contains a triangle")
        side = self.partition.side
        intra = {(u, v) for u, v in self.graph.edges()
                 if side[u] == side[v]}
        if intra != set(self.defects.g.edges()):
            raise ValueError("intra-part edges disagree with the defects")
        cross = {(u, v) for u, v in self.graph.edges() if side[u] != side[v]}
        want = {tuple(sorted((a, b))) for a, b in self.crossing}
        if cross != want:
            raise ValueError("crossing edges disagree with the record")
        view = self.defects.product_view()
        rows: dict = {}
        cols: dict = {}
        for a, b in self.crossing:
            rows.setdefault(a, set()).add(b)
            cols.setdefault(b, set()).add(a)
        for a, nbrs in view.s_adj.items():
            for a2 in nbrs:
                if rows.get(a, set()) & rows.get(a2, set()):
                    raise ValueError(
                        "crossing edges are not independent in the host")
        for b, nbrs in view.t_adj.items():
            for b2 in nbrs:
                if cols.get(b, set()) & cols.get(b2, set()):
                    raise ValueError(
                        "crossing edges are not independent in the host")


def sample_high(cfg: HighDensityConfig, *, eps: float = 1e-2, seed: int = 0,
                table: ImbalanceTable | None = None) -> SampleRecord:
    """Approximate sample from the weak-structure measure: partition, then
    defects, then crossing edges from the hard-core measure on the product
    host. The TV budget is split evenly between the defect chain and the
    crossing-edge sampler; the imbalance table adds its own per-entry
    error (build it at higher precision to tighten the first stage)."""
    if cfg.n < 2:
        raise ValueError("n must be at least 2")
    if not cfg.in_regime():
        warnings.warn(
            f"lam={cfg.lam:.4g} is below the high-density range "
            f"{cfg.C:.3g}/sqrt(n); structural guarantees do not apply",
            RuntimeWarning, stacklevel=2)
    diagnostics: dict = {}
    t0 = time.perf_counter()
    try:
        k, part = sample_imbalance(cfg, seed=seed, table=table)
    except Exception as exc:
        raise PipelineStageError("imbalance", str(exc)) from exc
    diagnostics["k"] = k
    diagnostics["t_imbalance"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    try:
        d = sample_defects(part, cfg, eps=eps / 2, seed=seed)
        d.validate()
    except Exception as exc:
        raise PipelineStageError("defects", str(exc)) from exc
    diagnostics["defect_edges"] = d.edge_count()
    diagnostics["omega"] = omega_membership(d, cfg.lam).member
    diagnostics["t_defects"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    try:
        crossing = hc_sample(d.product_view(), cfg.lam, eps=eps / 2,
                             seed=seed)
    except Exception as exc:
        raise PipelineStageError("crossing", str(exc)) from exc
    diagnostics["crossing_edges"] = len(crossing)
    diagnostics["t_crossing"] = time.perf_counter() - t0
    edges = list(d.g.edges()) + [tuple(sorted((a, b))) for a, b in crossing]
    try:
        g = Graph.from_edges(cfg.n, edges)
        record = SampleRecord(part, d, frozenset(crossing), g, diagnostics)
        record.validate()
    except Exception as exc:
        raise PipelineStageError("assemble", str(exc)) from exc
    return record


def count_high(cfg: HighDensityConfig, *, eps: float = 0.05, seed: int = 0,
               table: ImbalanceTable | None = None) -> LogEstimate:
    """Estimate the triangle-free probability of G(n,p) at p = lam/(1+lam)
    through the weak-partition sum M = sum_k binom(n,(n+k)/2) Z_k(lam).

    Returns log of M * (1-p)^binom(n,2) as a LogEstimate; per-k failure
    probabilities add up (union bound) into the reported delta. At lam=0
    every Z_k is 1 and the documented convention value sum_k binom is
    returned exactly.
    """
    n = cfg.n
    n_pairs = n * (n - 1) // 2
    if cfg.lam == 0:
        ks = admissible_imbalances(n, cfg.max_imbalance)
        log_m = float(logsumexp([
            math.lgamma(n + 1) - math.lgamma((n + k) // 2 + 1)
            - math.lgamma((n - k) // 2 + 1) for k in ks]))
        return LogEstimate(log_m, 0.0, 0.0, exact=True)
    if table is None:
        table = build_imbalance_table(cfg, eps=eps, seed=seed)
    log_m = table.log_total()
    log_mu = log_m - n_pairs * math.log1p(cfg.lam)
    delta = min(sum(0.0 if est.exact else est.delta
                    for est in table.estimates), 1.0)
    exact = all(est.exact for est in table.estimates)
    samples = sum(est.n_samples for est in table.estimates)
    cert_flags = [est.certificate_valid for est in table.estimates
                  if est.certificate_valid is not None]
    cert = all(cert_flags) if cert_flags else None
    return LogEstimate(log_mu, 0.0 if exact else eps, delta,
                       n_rungs=max((est.n_rungs for est in table.estimates),
                                   default=0),
                       n_samples=samples, exact=exact,
                       certificate_valid=cert)


def count_low(n: int, p: float, *, eps: float = 0.05, delta: float = 1 / 3,
              seed: int = 0, K: float = DEFAULT_BURNIN_CONST) -> LogEstimate:
    """Annealing estimate of the triangle-free probability of G(n,p).

    Telescopes Z(lam) = sum over triangle-free G of lam^{|G|} down an
    activity ladder to the empty graph, with per-rung ratios
    E[(lam'/lam)^{|G|}] estimated from thinned conditioned-chain samples,
    then multiplies by (1-p)^binom(n,2). Chebyshev-sized rungs give
    P(relative error > eps) <= delta.
    """
    if not 0 <= p < 1:
        raise ValueError("p must lie in [0, 1)")
    if not 0 < eps:
        raise ValueError("eps must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if n < 3 or p == 0:
        return LogEstimate(0.0, 0.0, 0.0, exact=True)
    if not subcritical(n, p):
        warnings.warn(
            f"p={p:.4g} is outside the low-density range; the annealing "
            "schedule has no mixing guarantee", RuntimeWarning, stacklevel=2)
    lam = p / (1.0 - p)
    n_pairs = n * (n - 1) // 2
    rng = stream(seed, "count-low", n, p, eps, delta, K)
    ei, ej = pair_arrays(n)
    side0 = np.zeros(n, dtype=np.int8)
    burn = default_burn_in(n, 0.01, K)
    gap = int(math.ceil(2 * n_pairs * math.log(n_pairs + 1)))

    def thinned_edge_counts(lam_i: float, m: int) -> np.ndarray:
        p_i = lam_i / (1.0 + lam_i)
        g = Graph(n)
        kernels.tf_glauber_run(g.bits, g.degree, ei, ej, p_i, burn,
                               kernel_seed(rng))
        rec_e = np.empty(m, dtype=np.int64)
        rec_c = np.empty(m, dtype=np.int64)
        kernels.tf_glauber_run_record(g.bits, g.degree, ei, ej, side0, p_i,
                                      m * gap, kernel_seed(rng), gap,
                                      rec_e, rec_c)
        return rec_e

    def rung_ratios(e_counts: np.ndarray, hi: float, lo: float) -> np.ndarray:
        if lo == 0.0:
            return (e_counts == 0).astype(float)
        return (lo / hi) ** e_counts

    rungs = []
    cur = lam
    total = 0
    while True:
        e_counts = thinned_edge_counts(cur, PILOT_SAMPLES)
        total += PILOT_SAMPLES
        if cur * n_pairs <= 0.5:
            nxt = 0.0
        else:
            nxt = cur * math.exp(-1.0 / (1.0 + float(e_counts.mean())))
        ratios = rung_ratios(e_counts, cur, nxt)
        mean = float(ratios.mean())
        if mean <= 0:
            raise RuntimeError("degenerate annealing rung")
        relvar = float(ratios.var(ddof=1)) / mean ** 2
        rungs.append((cur, nxt, relvar))
        if nxt == 0.0:
            break
        cur = nxt
    L = len(rungs)
    var_budget = eps * eps * delta / L
    log_z = 0.0
    for hi, lo, relvar in rungs:
        need = int(math.ceil(1.5 * max(relvar, 1e-4) / var_budget))
        need = max(need, MIN_RUNG_SAMPLES)
        e_counts = thinned_edge_counts(hi, need)
        total += need
        mean = float(rung_ratios(e_counts, hi, lo).mean())
        if mean <= 0:
            raise RuntimeError("degenerate annealing rung")
        log_z -= math.log(mean)
    log_mu = log_z + n_pairs * math.log1p(-p)
    return LogEstimate(log_mu, eps, delta, L, total)
