"""Defect dynamics for the high-density sampler.

A defect state holds the intra-part edges of a graph relative to an ordered
bipartition (A, B): the within-A graph S and within-B graph T, stored as one
Graph restricted to intra-part pairs. States are constrained to S u T
triangle-free with max degree at most cap, and weighted by
lam^{|S|+|T|} * Z_hc(S box T), where S box T is the Cartesian product whose
independent sets are exactly the admissible crossing-edge sets.

The heat-bath chain resamples one intra-part pair per step from its
conditional marginal p(e|rest) = lam*r/(1+lam*r), r the ratio of product-host
hard-core partition functions with and without e. Two marginal estimators are
provided: a deterministic truncated cluster series for log r (default) and a
Monte Carlo mode that estimates both partition functions with hc_estimate_Z.

estimate_Zw telescopes the normalizing constant Z_w = sum of state weights
down an activity ladder to lam=0, where only the empty state survives and
its weight is exactly 1.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import cluster, kernels
from .graph import Graph, Partition, ProductGraphView
from .hardcore import LogEstimate, hc_estimate_Z
from .rng import kernel_seed, stream

ALPHA_DEFAULT = 1.0 / (96.0 * math.e ** 3)
TAB_PAIR_BUDGET = 20
TAB_STATE_BUDGET = 100_000
MCMC_SAMPLE_GUARD = 10 ** 7
FINAL_RUNG_THRESHOLD = 0.55
ZW_PILOT = 300
ZW_MIN_RUNG = 300


@dataclass(frozen=True)
class HighDensityConfig:
    """Parameters of the structured sampler. The regime contract is
    lam >= C/sqrt(n); the degree cap defaults to floor(alpha/lam), which at
    the default alpha freezes the defect chain for all lam > alpha — tests
    and demos override cap (or alpha) to open the defect space."""

    n: int
    lam: float
    alpha: float = ALPHA_DEFAULT
    cap: int | None = None
    mode: str = "cluster-ratio"
    series_order: int = 4
    marginal_eps: float | None = None
    marginal_delta: float | None = None
    K: float = 6.0
    C: float = 5.0
    max_imbalance: int | None = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.mode not in ("cluster-ratio", "mcmc-ratio"):
            raise ValueError(f"unknown marginal mode {self.mode!r}")

    def resolved_cap(self) -> int:
        if self.cap is not None:
            return self.cap
        if self.lam == 0:
            raise ValueError("cap must be explicit at lam = 0")
        return int(self.alpha / self.lam)

    def in_regime(self) -> bool:
        return self.lam * math.sqrt(self.n) >= self.C


class DefectState:
    """Intra-part defect graph with its partition and degree cap."""

    __slots__ = ("part", "cap", "g")

    def __init__(self, part: Partition, cap: int, g: Graph | None = None):
        self.part = part
        self.cap = cap
        self.g = Graph(part.n) if g is None else g

    @classmethod
    def from_side_edges(cls, part: Partition, cap: int, s_edges, t_edges):
        g = Graph.from_edges(part.n, list(s_edges) + list(t_edges))
        return cls(part, cap, g)

    def copy(self) -> "DefectState":
        return DefectState(self.part, self.cap, self.g.copy())

    def edge_count(self) -> int:
        return self.g.edge_count()

    def side_edges(self) -> tuple[frozenset, frozenset]:
        side = self.part.side
        S, T = [], []
        for u, v in self.g.edges():
            (S if side[u] == 0 else T).append((u, v))
        return frozenset(S), frozenset(T)

    def key(self) -> tuple[frozenset, frozenset]:
        """Encoding matching the oracle's defect-state states."""
        return self.side_edges()

    def product_view(self) -> ProductGraphView:
        s_adj = {a: set(self.g.neighbors(a)) for a in self.part.A}
        t_adj = {b: set(self.g.neighbors(b)) for b in self.part.B}
        return ProductGraphView(self.part.A, self.part.B, s_adj, t_adj)

    def validate(self) -> None:
        side = self.part.side
        for u, v in self.g.edges():
            if side[u] != side[v]:
                raise ValueError(f"edge ({u},{v}) crosses the partition")
        if not self.g.is_triangle_free():
            raise ValueError("defect graph contains a triangle")
        if self.g.max_degree() > self.cap:
            raise ValueError("defect degree exceeds cap")


@dataclass(frozen=True)
class OmegaMembership:
    """Whether the defect degrees sit under the typical-degree threshold
    2*n*lam*exp(-n*lam^2/5), tracked separately from the hard cap."""
    threshold: float
    max_degree: int
    member: bool


def omega_membership(d: DefectState, lam: float) -> OmegaMembership:
    n = d.part.n
    thr = 2.0 * n * lam * math.exp(-n * lam * lam / 5.0)
    dmax = d.g.max_degree()
    return OmegaMembership(thr, dmax, dmax <= thr)


def empty_state_marginal(lam: float, other_side: int) -> float:
    """Closed-form conditional marginal for one defect edge added to empty
    defects: the product host gains a perfect matching over the opposite
    side, so r = ((1+2*lam)/(1+lam)^2)^{other_side} and p = lam*r/(1+lam*r)."""
    r = ((1.0 + 2.0 * lam) / (1.0 + lam) ** 2) ** other_side
    return lam * r / (1.0 + lam * r)


def _added_product_pairs(part: Partition, u: int, v: int) -> list:
    if part.side[u] == 0:
        return [((u, b), (v, b)) for b in part.B]
    return [((a, u), (a, v)) for a in part.A]


class MarginalCache:
    """Per-run cache keyed by (base-graph edge mask, pair). Cluster mode
    stores activity-independent series coefficients; mcmc mode stores the
    realized log-ratio estimate (reused so the chain kernel stays fixed
    within a run)."""

    __slots__ = ("data",)

    def __init__(self):
        self.data = {}


def _addition_admissible(base: Graph, u: int, v: int, cap: int) -> bool:
    if base.degree[u] + 1 > cap or base.degree[v] + 1 > cap:
        return False
    return base.common_neighbors(u, v) == 0


def log_ratio_series(d: DefectState, e: tuple, lam: float, kmax: int = 4,
                     budget: int = 500_000) -> cluster.TruncatedSeries | None:
    """Certified truncated series for log r(e | d): None when e is not even
    addable (zero conditional support)."""
    u, v = e
    base = d.g.copy()
    if base.has_edge(u, v):
        base.remove_edge(u, v)
    if not _addition_admissible(base, u, v, d.cap):
        return None
    without_view = DefectState(d.part, d.cap, base).product_view()
    with_g = base.copy()
    with_g.add_edge(u, v)
    with_view = DefectState(d.part, d.cap, with_g).product_view()
    pairs = _added_product_pairs(d.part, u, v)
    return cluster.truncated_log_ratio(with_view, without_view, pairs, lam,
                                       kmax=kmax, budget=budget)


def marginal_hat(d: DefectState, e: tuple, lam: float, *,
                 mode: str = "cluster-ratio", kmax: int = 4,
                 eps: float = 0.02, delta: float = 0.05,
                 rng=None, cache: MarginalCache | None = None) -> float:
    """Estimated conditional marginal of pair e given the rest of d.

    Inadmissible additions (cap or triangle violation) have zero conditional
    support and return 0 exactly. Otherwise p = lam*r/(1+lam*r) with r the
    with/without ratio of product-host partition functions; log r comes from
    the truncated cluster series (deterministic) or from two hc_estimate_Z
    calls at (eps, delta) each (mcmc-ratio).
    """
    u, v = e
    side = d.part.side
    if side[u] != side[v]:
        raise ValueError("marginal is defined for intra-part pairs only")
    base = d.g
    had = base.has_edge(u, v)
    if had:
        base = base.copy()
        base.remove_edge(u, v)
    if not _addition_admissible(base, u, v, d.cap):
        return 0.0
    key = (int(base.edge_mask()), (u, v) if u < v else (v, u))
    store = cache.data if cache is not None else None
    if mode == "cluster-ratio":
        coeffs = store.get(key) if store is not None else None
        if coeffs is None:
            base_state = DefectState(d.part, d.cap, base)
            with_g = base.copy()
            with_g.add_edge(u, v)
            with_state = DefectState(d.part, d.cap, with_g)
            coeffs = cluster.ratio_series_coeffs(
                with_state.product_view(), base_state.product_view(),
                _added_product_pairs(d.part, u, v), kmax)
            if store is not None:
                store[key] = coeffs
        log_r = sum(float(c) * lam ** k for k, c in coeffs.items())
    elif mode == "mcmc-ratio":
        log_r = store.get(key) if store is not None else None
        if log_r is None:
            base_state = DefectState(d.part, d.cap, base)
            with_g = base.copy()
            with_g.add_edge(u, v)
            with_state = DefectState(d.part, d.cap, with_g)
            wv = with_state.product_view()
            dmax = wv.max_degree()
            if dmax > 0 and lam > 1.0 / dmax:
                raise RuntimeError(
                    f"hard-core regime violated on the product host: "
                    f"lam={lam:.4g} > 1/{dmax}")
            s1 = int(rng.integers(1 << 32)) if rng is not None else 1
            s2 = int(rng.integers(1 << 32)) if rng is not None else 2
            m1 = hc_estimate_Z(wv, lam, eps=eps, delta=delta, seed=s1)
            m2 = hc_estimate_Z(base_state.product_view(), lam, eps=eps,
                               delta=delta, seed=s2)
            log_r = m1.log_value - m2.log_value
            if store is not None:
                store[key] = log_r
    else:
        raise ValueError(f"unknown marginal mode {mode!r}")
    r = math.exp(log_r)
    return lam * r / (1.0 + lam * r)


def check_partition(part: Partition, cfg: HighDensityConfig) -> None:
    """Shared preconditions: matching size and imbalance within the weak
    range (or the config's explicit max_imbalance override)."""
    if part.n != cfg.n:
        raise ValueError("partition size does not match config n")
    limit = (cfg.max_imbalance if cfg.max_imbalance is not None
             else part.n // 10)
    if part.imbalance > limit:
        raise ValueError(
            f"partition imbalance {part.imbalance} exceeds limit {limit}")


def chain_length(n: int, eps: float, K: float) -> int:
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    return int(math.ceil(K * n * n * math.log(n / eps)))


def resolve_budgets(cfg: HighDensityConfig, eps: float, T: int):
    """Per-step (eps', delta') for the marginal estimator: explicit config
    values win; otherwise eps/T and 1/T. The mcmc mode refuses schedules
    whose implied per-marginal sample counts are astronomically large."""
    if cfg.marginal_eps is not None:
        return cfg.marginal_eps, (cfg.marginal_delta
                                  if cfg.marginal_delta is not None else 0.05)
    eps_p = eps / T
    delta_p = 1.0 / T
    if cfg.mode == "mcmc-ratio":
        implied = 1.0 / (eps_p * eps_p * delta_p)
        if implied > MCMC_SAMPLE_GUARD:
            raise RuntimeError(
                "per-step budgets eps/T, 1/T imply ~%.2g hard-core samples "
                "per marginal; set marginal_eps/marginal_delta explicitly "
                "for feasible mcmc-ratio runs" % implied)
    return eps_p, delta_p


def nu_glauber_step(d: DefectState, cfg: HighDensityConfig, rng, *,
                    cache: MarginalCache | None = None,
                    pairs=None, eps_p: float = 0.02,
                    delta_p: float = 0.05) -> tuple:
    """One heat-bath update of the defect chain, in place: uniform intra-part
    pair, present after the update iff U < p_hat(e|rest)."""
    if pairs is None:
        pairs = d.part.intra_pairs()
    u, v = pairs[int(rng.integers(len(pairs)))]
    p_hat = marginal_hat(d, (u, v), cfg.lam, mode=cfg.mode,
                         kmax=cfg.series_order, eps=eps_p, delta=delta_p,
                         rng=rng, cache=cache)
    want = float(rng.random()) < p_hat
    present = d.g.has_edge(u, v)
    if want and not present:
        d.g.add_edge(u, v)
    elif not want and present:
        d.g.remove_edge(u, v)
    return u, v


class TabStructure:
    """Explicit defect state space with successor indices per (state, pair),
    independent of the activity and marginal mode. Only built for small
    instances (the oracle-checkable regime)."""

    __slots__ = ("part", "cap", "pairs", "states", "index", "edge_counts",
                 "succ_on", "succ_off", "admissible", "graphs")

    def __init__(self, part, cap, pairs, states, index, edge_counts,
                 succ_on, succ_off, admissible, graphs):
        self.part = part
        self.cap = cap
        self.pairs = pairs
        self.states = states
        self.index = index
        self.edge_counts = edge_counts
        self.succ_on = succ_on
        self.succ_off = succ_off
        self.admissible = admissible
        self.graphs = graphs

    def state(self, i: int) -> DefectState:
        return DefectState(self.part, self.cap, self.graphs[i].copy())


@lru_cache(maxsize=32)
def _space_structure(part: Partition, cap: int) -> TabStructure:
    """Enumerate the defect space once per (partition, cap). Raises
    oracle.BudgetError beyond the enumeration budget."""
    from .oracle import BudgetError, defect_states

    pairs = part.intra_pairs()
    if len(pairs) > TAB_PAIR_BUDGET:
        raise BudgetError("too many intra-part pairs to tabulate")
    states = defect_states(part, cap)
    if len(states) > TAB_STATE_BUDGET:
        raise BudgetError("defect space too large to tabulate")
    index = {}
    graphs = []
    for i, (S, T) in enumerate(states):
        index[(S, T)] = i
        graphs.append(Graph.from_edges(part.n, list(S) + list(T)))
    ns, np_ = len(states), len(pairs)
    side = part.side
    succ_on = np.empty((ns, np_), dtype=np.int64)
    succ_off = np.empty((ns, np_), dtype=np.int64)
    admissible = np.zeros((ns, np_), dtype=bool)
    edge_counts = np.empty(ns, dtype=np.int64)
    for i, (S, T) in enumerate(states):
        edge_counts[i] = len(S) + len(T)
        for k, (u, v) in enumerate(pairs):
            e = (u, v)
            on_a_side = side[u] == 0
            S_on = frozenset(set(S) | {e}) if on_a_side else S
            T_on = T if on_a_side else frozenset(set(T) | {e})
            S_off = frozenset(set(S) - {e}) if on_a_side else S
            T_off = T if on_a_side else frozenset(set(T) - {e})
            succ_off[i, k] = index[(S_off, T_off)]
            on_key = (S_on, T_on)
            if on_key in index:
                succ_on[i, k] = index[on_key]
                admissible[i, k] = True
            else:
                succ_on[i, k] = i
    return TabStructure(part, cap, pairs, states, index, edge_counts,
                        succ_on, succ_off, admissible, graphs)


class TabulatedSpace:
    """TabStructure plus per-(state, pair) marginals at one activity, for
    running the chain in compiled code."""

    __slots__ = ("structure", "p_hat")

    def __init__(self, structure: TabStructure, p_hat):
        self.structure = structure
        self.p_hat = p_hat

    part = property(lambda self: self.structure.part)
    cap = property(lambda self: self.structure.cap)
    pairs = property(lambda self: self.structure.pairs)
    states = property(lambda self: self.structure.states)
    index = property(lambda self: self.structure.index)
    edge_counts = property(lambda self: self.structure.edge_counts)
    succ_on = property(lambda self: self.structure.succ_on)
    succ_off = property(lambda self: self.structure.succ_off)

    def state(self, i: int) -> DefectState:
        return self.structure.state(i)


def tabulate_space(part: Partition, cap: int, lam: float, *,
                   kmax: int = 4, coeff_cache: MarginalCache | None = None):
    """Tabulate cluster-mode marginals at activity lam over the enumerated
    defect space. Raises oracle.BudgetError beyond the enumeration budget."""
    st = _space_structure(part, cap)
    if coeff_cache is None:
        coeff_cache = MarginalCache()
    ns, np_ = len(st.states), len(st.pairs)
    p_hat = np.zeros((ns, np_))
    for i in range(ns):
        d = DefectState(part, cap, st.graphs[i])
        for k in range(np_):
            if st.admissible[i, k]:
                p_hat[i, k] = marginal_hat(d, st.pairs[k], lam,
                                           mode="cluster-ratio", kmax=kmax,
                                           cache=coeff_cache)
    return TabulatedSpace(st, p_hat)


_TAB_COEFF_STORES: dict = {}
_CLUSTER_WORKSPACES: dict = {}


@lru_cache(maxsize=128)
def _tabulate_cached(part: Partition, cap: int, lam: float, kmax: int):
    """Memoized tabulation; marginal coefficients are activity-independent
    and shared across activities through a per-(part, cap, kmax) store.
    The capacity covers every balanced ordered partition at n = 8 (70), so
    repeated pipeline draws do not thrash the cache."""
    store = _TAB_COEFF_STORES.setdefault((part, cap, kmax), MarginalCache())
    return tabulate_space(part, cap, lam, kmax=kmax, coeff_cache=store)


def sample_defects(part: Partition, cfg: HighDensityConfig, *,
                   eps: float = 1e-2, seed: int = 0,
                   steps: int | None = None,
                   use_tabulation: bool = True) -> DefectState:
    """Approximate sample from the defect distribution for one partition.

    Runs T = K * n^2 * log(n/eps) heat-bath updates from the empty state.
    With cap = 0 every addition is inadmissible and the chain is provably
    frozen at the empty state, which is returned without stepping. Small
    instances run through the tabulated compiled chain (cluster marginals,
    or one realized host table per call in mcmc mode with default budgets);
    all other cases fall back to the per-step Python path.
    """
    check_partition(part, cfg)
    cap = cfg.resolved_cap()
    T = chain_length(part.n, eps, cfg.K) if steps is None else int(steps)
    d = DefectState(part, cap)
    if cap == 0 or T == 0 or cfg.lam == 0:
        return d
    rng = stream(seed, "sample-defects", part.n, part.imbalance, cfg.lam,
                 cap, cfg.mode, eps, steps)
    if use_tabulation and cfg.mode == "cluster-ratio":
        from .oracle import BudgetError
        try:
            tab = _tabulate_cached(part, cap, cfg.lam, cfg.series_order)
        except BudgetError:
            tab = None
        if tab is not None:
            i0 = tab.index[(frozenset(), frozenset())]
            sf = kernels.tab_chain_run(tab.p_hat, tab.succ_on, tab.succ_off,
                                       T, kernel_seed(rng), i0)
            return tab.state(int(sf))
    if (use_tabulation and cfg.mode == "mcmc-ratio"
            and cfg.marginal_eps is None and cfg.marginal_delta is None
            and 2 * cap * cfg.lam <= 1.0):
        from .oracle import BudgetError
        try:
            st = _space_structure(part, cap)
        except BudgetError:
            st = None
        if st is not None:
            table = _RealizedHostTable(part, cap, st, rng)
            p_hat = _table_p_hat(st, table.g_at(cfg.lam), cfg.lam)
            i0 = st.index[(frozenset(), frozenset())]
            sf = kernels.tab_chain_run(p_hat, st.succ_on, st.succ_off, T,
                                       kernel_seed(rng), i0)
            return st.state(int(sf))
    eps_p, delta_p = resolve_budgets(cfg, eps, T)
    cache = MarginalCache()
    pairs = part.intra_pairs()
    for _ in range(T):
        nu_glauber_step(d, cfg, rng, cache=cache, pairs=pairs,
                        eps_p=eps_p, delta_p=delta_p)
    return d


def _host_log_z_coeffs(d: DefectState, kmax: int, store: dict):
    """Activity-independent series coefficients of log Z for d's product
    host, cached by defect-graph mask."""
    key = int(d.g.edge_mask())
    coeffs = store.get(key)
    if coeffs is None:
        coeffs = cluster.cluster_series_coeffs(d.product_view(), kmax)
        store[key] = {k: float(c) for k, c in coeffs.items()}
        coeffs = store[key]
    return coeffs


def _host_log_z_cluster(d: DefectState, lam: float, kmax: int,
                        store: dict, nv_box: int) -> float:
    if d.edge_count() == 0:
        return nv_box * math.log1p(lam)
    coeffs = _host_log_z_coeffs(d, kmax, store)
    return sum(c * lam ** k for k, c in coeffs.items())


def _host_log_z_ratio_mcmc(d: DefectState, hi: float, lo: float,
                           m: int, rng, store: dict) -> float:
    """log(Z_host(lo) / Z_host(hi)) by reverse-ratio sampling on the
    materialized host; cached per (mask, hi, lo)."""
    from . import hardcore

    key = (int(d.g.edge_mask()), hi, lo)
    val = store.get(key)
    if val is not None:
        return val
    g = d.product_view().materialize()
    if g.edge_count() == 0:
        val = g.n * (math.log1p(lo) - math.log1p(hi))
        store[key] = val
        return val
    occ = np.zeros(g.bits.shape[1], dtype=np.uint64)
    burn = hardcore.hc_burn_in(g.n, 0.1)
    kernels.hc_glauber_run(g.bits, occ, float(hi), burn, kernel_seed(rng))
    out = np.empty(m, dtype=np.int64)
    kernels.hc_glauber_sweep_occupancies(g.bits, occ, float(hi), m,
                                         2 * g.n, kernel_seed(rng), out)
    mean = float(((lo / hi) ** out).mean())
    if mean <= 0:
        raise RuntimeError("degenerate host ratio estimate")
    val = math.log(mean)
    store[key] = val
    return val


@lru_cache(maxsize=4096)
def _canonical_edges(edges: tuple) -> tuple:
    """Canonical form of an edge tuple under relabeling of its non-isolated
    vertices; exact for up to 7 such vertices, identity key beyond (a finer
    key only costs duplicate work, never wrong answers)."""
    verts = sorted({v for e in edges for v in e})
    if len(verts) > 7:
        return ("raw",) + tuple(sorted(edges))
    best = None
    for perm in itertools.permutations(range(len(verts))):
        relabel = {v: perm[t] for t, v in enumerate(verts)}
        key = tuple(sorted(tuple(sorted((relabel[a], relabel[b])))
                           for a, b in edges))
        if best is None or key < best:
            best = key
    return best


class _RealizedHostTable:
    """Per-ladder realized log Z_hc values for every host in a tabulated
    defect space, indexed by activity.

    Hosts are grouped by the defect graph's per-side isomorphism class (the
    Cartesian product host is determined by it); each non-empty class gets
    one acceptance-chain estimate per activity, the mean indicator that a
    hard-core sample on the parent host stays independent after the host
    edges of one more defect edge are added. log Z accumulates along these
    fixed edge-insertion paths from the exactly-known edgeless host. One
    table serves both the chain marginals and the rung weights at that
    activity, so a ladder telescopes exactly to the tabled weight sum and
    estimate quality rests on the top-activity table alone.
    """

    def __init__(self, part: Partition, cap: int, st: TabStructure, rng,
                 m_top: int = 4000, m_mid: int = 1200):
        self.part = part
        self.cap = cap
        self.st = st
        self.rng = rng
        self.m_top = m_top
        self.m_mid = m_mid
        self.nv_box = len(part.A) * len(part.B)
        self._tables: dict = {}
        self._first = True
        ns = len(st.states)
        cls_of = np.empty(ns, dtype=np.int64)
        classes: dict = {}
        reps = []
        for i in np.argsort(st.edge_counts, kind="stable"):
            S, T = st.states[i]
            key = (_canonical_edges(tuple(sorted(S))),
                   _canonical_edges(tuple(sorted(T))))
            cid = classes.get(key)
            if cid is None:
                cid = len(reps)
                classes[key] = cid
                reps.append(int(i))
            cls_of[i] = cid
        self.cls_of = cls_of
        self.n_classes = len(reps)
        a_pos = {a: i for i, a in enumerate(part.A)}
        b_pos = {b: i for i, b in enumerate(part.B)}
        nb = len(part.B)
        # per class: (parent class id, parent host bits, added host edges)
        self._chi_inputs: list = [None] * self.n_classes
        for cid, i in enumerate(reps):
            S, T = st.states[i]
            if not S and not T:
                continue
            e = max(S | T)
            S_par = frozenset(S - {e}) if e in S else S
            T_par = T if e in S else frozenset(T - {e})
            parent_cid = int(cls_of[st.index[(S_par, T_par)]])
            host = DefectState.from_side_edges(part, cap, S_par,
                                               T_par).product_view()
            bits = host.materialize().bits
            u, v = e
            if u in a_pos:
                add = [(a_pos[u] * nb + j, a_pos[v] * nb + j)
                       for j in range(nb)]
            else:
                add = [(i2 * nb + b_pos[u], i2 * nb + b_pos[v])
                       for i2 in range(len(part.A))]
            add_i = np.array([x for x, _ in add], dtype=np.int64)
            add_j = np.array([y for _, y in add], dtype=np.int64)
            self._chi_inputs[cid] = (parent_cid, bits, add_i, add_j)

    def g_at(self, lam: float) -> np.ndarray:
        """Realized log Z_hc(host, lam) per state index; estimates at a new
        activity are drawn once and reused for the rest of the ladder."""
        from . import hardcore

        t = self._tables.get(lam)
        if t is not None:
            return t
        m = self.m_top if self._first else self.m_mid
        self._first = False
        class_g = np.empty(self.n_classes)
        for cid in range(self.n_classes):
            inputs = self._chi_inputs[cid]
            if inputs is None:
                class_g[cid] = self.nv_box * math.log1p(lam)
                continue
            parent_cid, bits, add_i, add_j = inputs
            nv = bits.shape[0]
            occ = np.zeros(bits.shape[1], dtype=np.uint64)
            burn = hardcore.hc_burn_in(nv, 0.1)
            kernels.hc_glauber_run(bits, occ, float(lam), burn,
                                   kernel_seed(self.rng))
            hits = kernels.hc_glauber_sweep_chi(bits, occ, float(lam), m,
                                                2 * nv,
                                                kernel_seed(self.rng),
                                                add_i, add_j)
            if hits == 0:
                raise RuntimeError("degenerate host acceptance estimate")
            class_g[cid] = class_g[parent_cid] + math.log(hits / m)
        t = class_g[self.cls_of]
        self._tables[lam] = t
        return t


def _table_p_hat(st: TabStructure, g: np.ndarray, lam: float) -> np.ndarray:
    """Heat-bath marginals over a tabulated space from per-state log host
    partition values."""
    r = np.exp(g[st.succ_on] - g[:, None])
    p = lam * r / (1.0 + lam * r)
    p[~st.admissible] = 0.0
    return p


def _zw_table_ladder(part, cfg, cap, eps, delta, rng):
    """Activity ladder over a tabulated defect space in mcmc mode: realized
    host tables shared by kernel and weights, chain steps in compiled code.
    Raises oracle.BudgetError when the space exceeds the tabulation budget."""
    st = _space_structure(part, cap)
    if 2 * cap * cfg.lam > 1.0:
        raise RuntimeError(
            "hard-core activity exceeds 1/max-degree for the product hosts")
    table = _RealizedHostTable(part, cap, st, rng)
    nv_box = len(part.A) * len(part.B)
    n_pairs = len(st.pairs)
    burn = chain_length(part.n, 0.1, cfg.K)
    gap = int(math.ceil(2 * n_pairs * math.log(n_pairs + 1)))
    i0 = st.index[(frozenset(), frozenset())]
    ec = st.edge_counts.astype(np.float64)

    def thinned_indices(lam, m):
        p_hat = _table_p_hat(st, table.g_at(lam), lam)
        s = kernels.tab_chain_run(p_hat, st.succ_on, st.succ_off, burn,
                                  kernel_seed(rng), i0)
        out = np.empty(m, dtype=np.int64)
        kernels.tab_chain_thinned(p_hat, st.succ_on, st.succ_off, m, gap,
                                  kernel_seed(rng), int(s), out)
        return out

    def state_ratios(hi, lo):
        if lo == 0.0:
            w = np.zeros(len(st.states))
            w[i0] = math.exp(-nv_box * math.log1p(hi))
            return w
        return np.exp(ec * math.log(lo / hi) + table.g_at(lo)
                      - table.g_at(hi))

    rungs = []
    cur = cfg.lam
    total = 0
    while True:
        idx = thinned_indices(cur, ZW_PILOT)
        total += ZW_PILOT
        mean_edges = float(ec[idx].mean())
        m_eff = mean_edges + cur * nv_box / (1.0 + cur)
        if cur * nv_box <= FINAL_RUNG_THRESHOLD:
            nxt = 0.0
        else:
            nxt = cur * math.exp(-1.0 / (1.0 + m_eff))
        ratios = state_ratios(cur, nxt)[idx]
        mean = float(ratios.mean())
        if mean <= 0:
            raise RuntimeError("degenerate ladder rung in Z_w estimation")
        relvar = float(ratios.var(ddof=1)) / mean ** 2
        rungs.append((cur, nxt, relvar))
        if nxt == 0.0:
            break
        cur = nxt
    L = len(rungs)
    var_budget = eps * eps * delta / L
    log_zw = 0.0
    for hi, lo, relvar in rungs:
        need = int(math.ceil(1.5 * max(relvar, 1e-4) / var_budget))
        need = max(need, ZW_MIN_RUNG)
        idx = thinned_indices(hi, need)
        total += need
        mean = float(state_ratios(hi, lo)[idx].mean())
        if mean <= 0:
            raise RuntimeError("degenerate ladder rung in Z_w estimation")
        log_zw -= math.log(mean)
    return log_zw, L, total


class ZwWorkspace:
    """Caches reusable across repeated Z_w estimations on one partition:
    activity-independent marginal and log-Z series coefficients, and realized
    mcmc host ratios."""

    __slots__ = ("coeff_cache", "logz_store", "mcmc_ratio_store")

    def __init__(self):
        self.coeff_cache = MarginalCache()
        self.logz_store: dict = {}
        self.mcmc_ratio_store: dict = {}


class _ZwSampler:
    """Thinned defect-chain samples at a given activity, tabulated when
    possible, with per-state weight-ratio evaluation."""

    def __init__(self, part, cfg, cap, rng, ws: ZwWorkspace):
        self.part = part
        self.cfg = cfg
        self.cap = cap
        self.rng = rng
        self.nv_box = len(part.A) * len(part.B)
        self.pairs = part.intra_pairs()
        self.coeff_cache = ws.coeff_cache
        self.logz_store = ws.logz_store
        self.mcmc_ratio_store = ws.mcmc_ratio_store
        self.use_tab = False
        if cfg.mode == "cluster-ratio":
            from .oracle import BudgetError
            try:
                _tabulate_cached(part, cap, cfg.lam, cfg.series_order)
                self.use_tab = True
            except BudgetError:
                pass

    def thinned_states(self, lam: float, m: int, gap: int, burn: int):
        """m thinned samples from the defect chain at activity lam, as
        DefectState handles."""
        if self.use_tab:
            tab = _tabulate_cached(self.part, self.cap, lam,
                                   self.cfg.series_order)
            i0 = tab.index[(frozenset(), frozenset())]
            s = kernels.tab_chain_run(tab.p_hat, tab.succ_on, tab.succ_off,
                                      burn, kernel_seed(self.rng), i0)
            out = np.empty(m, dtype=np.int64)
            kernels.tab_chain_thinned(tab.p_hat, tab.succ_on, tab.succ_off,
                                      m, gap, kernel_seed(self.rng),
                                      int(s), out)
            return [tab.state(int(i)) for i in out]
        cfg_l = HighDensityConfig(
            n=self.cfg.n, lam=lam, alpha=self.cfg.alpha, cap=self.cap,
            mode=self.cfg.mode, series_order=self.cfg.series_order,
            marginal_eps=self.cfg.marginal_eps if self.cfg.marginal_eps
            is not None else 0.02,
            marginal_delta=self.cfg.marginal_delta if self.cfg.marginal_delta
            is not None else 0.05, K=self.cfg.K, C=self.cfg.C)
        cache = MarginalCache()
        d = DefectState(self.part, self.cap)
        eps_p = cfg_l.marginal_eps
        delta_p = cfg_l.marginal_delta
        for _ in range(burn):
            nu_glauber_step(d, cfg_l, self.rng, cache=cache, pairs=self.pairs,
                            eps_p=eps_p, delta_p=delta_p)
        states = []
        for _ in range(m):
            for _ in range(gap):
                nu_glauber_step(d, cfg_l, self.rng, cache=cache,
                                pairs=self.pairs, eps_p=eps_p,
                                delta_p=delta_p)
            states.append(d.copy())
        return states

    def log_weight_ratios(self, states, hi: float, lo: float) -> np.ndarray:
        """Per-sample log of w_lo(state)/w_hi(state); -inf where the lo-weight
        vanishes (lo = 0 with nonempty state)."""
        out = np.empty(len(states))
        for i, d in enumerate(states):
            ec = d.edge_count()
            if lo == 0.0:
                if ec > 0:
                    out[i] = -math.inf
                    continue
                out[i] = -self.nv_box * math.log1p(hi)
                continue
            if self.cfg.mode == "cluster-ratio":
                lz_hi = _host_log_z_cluster(d, hi, self.cfg.series_order,
                                            self.logz_store, self.nv_box)
                lz_lo = _host_log_z_cluster(d, lo, self.cfg.series_order,
                                            self.logz_store, self.nv_box)
                host_term = lz_lo - lz_hi
            else:
                host_term = _host_log_z_ratio_mcmc(
                    d, hi, lo, 2000, self.rng, self.mcmc_ratio_store)
            out[i] = ec * math.log(lo / hi) + host_term
        return out


def _zw_single_ladder(part, cfg, cap, eps, delta, rng, ws):
    if cfg.mode == "mcmc-ratio":
        from .oracle import BudgetError
        try:
            return _zw_table_ladder(part, cfg, cap, eps, delta, rng)
        except BudgetError:
            pass
    n = part.n
    sampler = _ZwSampler(part, cfg, cap, rng, ws)
    nv_box = sampler.nv_box
    n_pairs = len(sampler.pairs)
    burn = chain_length(n, 0.1, cfg.K)
    gap = int(math.ceil(2 * n_pairs * math.log(n_pairs + 1)))
    rungs = []
    cur = cfg.lam
    total = 0
    while True:
        states = sampler.thinned_states(cur, ZW_PILOT, gap, burn)
        total += ZW_PILOT
        mean_edges = float(np.mean([d.edge_count() for d in states]))
        m_eff = mean_edges + cur * nv_box / (1.0 + cur)
        if cur * nv_box <= FINAL_RUNG_THRESHOLD:
            nxt = 0.0
        else:
            nxt = cur * math.exp(-1.0 / (1.0 + m_eff))
        ratios = np.exp(sampler.log_weight_ratios(states, cur, nxt))
        mean = float(ratios.mean())
        if mean <= 0:
            raise RuntimeError("degenerate ladder rung in Z_w estimation")
        relvar = float(ratios.var(ddof=1)) / mean ** 2
        rungs.append((cur, nxt, relvar))
        if nxt == 0.0:
            break
        cur = nxt
    L = len(rungs)
    var_budget = eps * eps * delta / L
    log_zw = 0.0
    for hi, lo, relvar in rungs:
        need = int(math.ceil(1.5 * max(relvar, 1e-4) / var_budget))
        need = max(need, ZW_MIN_RUNG)
        states = sampler.thinned_states(hi, need, gap, burn)
        total += need
        mean = float(np.exp(sampler.log_weight_ratios(states, hi, lo)).mean())
        if mean <= 0:
            raise RuntimeError("degenerate ladder rung in Z_w estimation")
        log_zw -= math.log(mean)
    return log_zw, L, total


def zw_certificate_valid(cfg: HighDensityConfig, cap: int) -> bool:
    """Whether the truncated-series convergence condition holds for every
    host the ladder can touch (max product-host degree is 2*cap)."""
    dmax = 2 * cap
    return cfg.lam <= 1.0 / (2.0 * math.e * (dmax + 1))


def estimate_Zw(part: Partition, cfg: HighDensityConfig, *,
                eps: float = 0.05, delta: float = 0.1, seed: int = 0,
                workspace: ZwWorkspace | None = None) -> LogEstimate:
    """Relative-error estimate of Z_w for one partition: the sum over defect
    states of lam^{edges} * Z_hc(product host).

    cap = 0 collapses the sum to the single empty state with the closed form
    (1+lam)^{|A||B|}, returned exactly. Otherwise the estimate telescopes
    down an activity ladder with defect-chain sampling at each rung.
    """
    check_partition(part, cfg)
    if not 0 < eps:
        raise ValueError("eps must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    cap = cfg.resolved_cap()
    nv_box = len(part.A) * len(part.B)
    if cap == 0:
        return LogEstimate(nv_box * math.log1p(cfg.lam), 0.0, 0.0,
                           exact=True, certificate_valid=True)
    if cfg.lam == 0:
        return LogEstimate(0.0, 0.0, 0.0, exact=True, certificate_valid=True)
    cert = (zw_certificate_valid(cfg, cap)
            if cfg.mode == "cluster-ratio" else None)
    rng = stream(seed, "estimate-zw", part.n, part.imbalance, cfg.lam, cap,
                 cfg.mode, eps, delta)
    ws = workspace
    if ws is None:
        if cfg.mode == "cluster-ratio":
            # deterministic caches: safe to share across calls
            ws = _CLUSTER_WORKSPACES.setdefault(
                (part, cap, cfg.series_order), ZwWorkspace())
        else:
            # realized mc ratios must stay call-local for independent runs
            ws = ZwWorkspace()
    if delta >= 0.05:
        log_zw, L, total = _zw_single_ladder(part, cfg, cap, eps, delta, rng,
                                             ws)
        return LogEstimate(log_zw, eps, delta, L, total,
                           certificate_valid=cert)
    reps = int(math.ceil(8.0 * math.log(1.0 / delta)))
    if reps % 2 == 0:
        reps += 1
    vals = []
    L = total = 0
    for _ in range(reps):
        log_zw, rung_count, samples = _zw_single_ladder(part, cfg, cap, eps,
                                                        0.25, rng, ws)
        vals.append(log_zw)
        L = rung_count
        total += samples
    return LogEstimate(float(np.median(vals)), eps, delta, L, total,
                       certificate_valid=cert)
