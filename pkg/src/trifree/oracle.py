"""Brute-force ground truth at small sizes.

Exact enumeration of triangle-free graphs, exact partition functions (graph
and hard-core), exact defect-pair distributions, and total variation
distances. Everything stochastic in this package is tested against these.

Rational inputs (fractions.Fraction) propagate exactly; float inputs give
float results.
"""

import csv
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .graph import (Graph, Partition, ProductGraphView, adjacency_map,
                    all_pairs, edge_index)

MAX_ENUM_N = 7           # triangle-free enumeration budget: 2^21 subsets
MAX_HARDCORE_VERTICES = 24


class BudgetError(ValueError):
    """Requested exact computation exceeds the oracle's size budget."""


def triangle_masks(n: int):
    """Edge-index bitmasks of all triangles on n labeled vertices."""
    pairs = all_pairs(n)
    idx = {e: k for k, e in enumerate(pairs)}
    out = []
    for a, b, c in itertools.combinations(range(n), 3):
        out.append((1 << idx[(a, b)]) | (1 << idx[(a, c)]) | (1 << idx[(b, c)]))
    return out


def triangle_free_masks(n: int):
    """All triangle-free graphs on n vertices, as edge bitmasks."""
    if n > MAX_ENUM_N:
        raise BudgetError(f"exact enumeration limited to n <= {MAX_ENUM_N}, got {n}")
    tris = triangle_masks(n)
    m = n * (n - 1) // 2
    out = []
    for mask in range(1 << m):
        if all((mask & t) != t for t in tris):
            out.append(mask)
    return out


def exact_Z(n: int, lam):
    """Partition function sum of lam^{|E(G)|} over triangle-free graphs."""
    return sum(lam ** bin(mask).count("1") for mask in triangle_free_masks(n))


def exact_conditioned_probability(n: int, p):
    """Probability that G(n,p) is triangle-free: Z(lam)*(1-p)^C(n,2), lam=p/(1-p)."""
    lam = p / (1 - p)
    m = n * (n - 1) // 2
    return exact_Z(n, lam) * (1 - p) ** m


@dataclass
class ExactDistribution:
    """Finite distribution with hashable state encodings.

    probs is float for arithmetic; weights keeps the exact values when the
    activity was rational.
    """

    states: list
    probs: np.ndarray
    weights: list = field(default=None, repr=False)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        self.index = {s: i for i, s in enumerate(self.states)}

    @classmethod
    def from_weights(cls, states, weights):
        total = sum(weights)
        probs = np.array([float(w / total) for w in weights])
        return cls(states=list(states), probs=probs, weights=list(weights))

    def prob(self, state) -> float:
        i = self.index.get(state)
        return 0.0 if i is None else float(self.probs[i])

    def expectation(self, f) -> float:
        return float(sum(p * f(s) for s, p in zip(self.states, self.probs)))

    def sample(self, rng, size=None):
        idx = rng.choice(len(self.states), size=size, p=self.probs)
        if size is None:
            return self.states[idx]
        return [self.states[i] for i in idx]

    def to_csv(self, f):
        close = False
        if isinstance(f, (str, bytes)):
            f = open(f, "w", newline="")
            close = True
        try:
            w = csv.writer(f)
            w.writerow(["state_encoding", "probability"])
            for s, p in zip(self.states, self.probs):
                w.writerow([s, repr(float(p))])
        finally:
            if close:
                f.close()

    @classmethod
    def from_csv(cls, f):
        close = False
        if isinstance(f, (str, bytes)):
            f = open(f, newline="")
            close = True
        try:
            r = csv.reader(f)
            header = next(r)
            if header != ["state_encoding", "probability"]:
                raise ValueError("bad distribution CSV header")
            states, probs = [], []
            for s, p in r:
                states.append(int(s) if s.lstrip("-").isdigit() else s)
                probs.append(float(p))
            return cls(states=states, probs=np.array(probs))
        finally:
            if close:
                f.close()


def exact_mu(n: int, p) -> ExactDistribution:
    """Conditioned measure mu_{T,p} over triangle-free graphs (edge-mask states)."""
    lam = p / (1 - p)
    masks = triangle_free_masks(n)
    weights = [lam ** bin(mk).count("1") for mk in masks]
    return ExactDistribution.from_weights(masks, weights)


def _graph_int_rows(g: Graph):
    """Adjacency rows as python ints (fast arbitrary-width bit ops)."""
    rows = []
    for i in range(g.n):
        r = 0
        for w in range(g.bits.shape[1]):
            r |= int(g.bits[i, w]) << (64 * w)
        rows.append(r)
    return rows


def exact_hardcore_Z(g: Graph, lam):
    """Independent-set polynomial of g evaluated at lam, by branching DP."""
    if g.n > MAX_HARDCORE_VERTICES:
        raise BudgetError(
            f"exact hard-core budget is {MAX_HARDCORE_VERTICES} vertices, got {g.n}")
    rows = _graph_int_rows(g)
    one = 1 if isinstance(lam, (int, Fraction)) else 1.0
    memo = {}

    def z(mask):
        if mask == 0:
            return one
        got = memo.get(mask)
        if got is not None:
            return got
        v = (mask & -mask).bit_length() - 1
        without = z(mask & ~(1 << v))
        with_v = lam * z(mask & ~(1 << v) & ~rows[v])
        memo[mask] = r = without + with_v
        return r

    return z((1 << g.n) - 1)


def independent_set_masks(g: Graph):
    """All independent sets of g as vertex bitmasks (small hosts)."""
    if g.n > MAX_HARDCORE_VERTICES:
        raise BudgetError("host too large for exact enumeration")
    rows = _graph_int_rows(g)
    out = []
    for mask in range(1 << g.n):
        ok = True
        m = mask
        while m:
            v = (m & -m).bit_length() - 1
            if rows[v] & mask:
                ok = False
                break
            m &= m - 1
        if ok:
            out.append(mask)
    return out


def exact_hardcore_distribution(g: Graph, lam) -> ExactDistribution:
    """Hard-core measure over independent sets (vertex-mask states)."""
    masks = independent_set_masks(g)
    weights = [lam ** bin(mk).count("1") for mk in masks]
    return ExactDistribution.from_weights(masks, weights)


def defect_states(part: Partition, cap: int):
    """All (S,T) defect pairs: intra-part graphs, max degree <= cap,
    union triangle-free. States encoded as (S_edges, T_edges) frozensets."""
    pairs_A = [e for e in part.intra_pairs() if e[0] in part.A and e[1] in part.A]
    pairs_B = [e for e in part.intra_pairs() if e[0] in part.B and e[1] in part.B]
    if len(pairs_A) + len(pairs_B) > 20:
        raise BudgetError("too many intra-part pairs for exact defect enumeration")

    def side_graphs(verts, pairs):
        out = []
        for r in range(len(pairs) + 1):
            for comb in itertools.combinations(pairs, r):
                deg = {}
                ok = True
                for u, v in comb:
                    deg[u] = deg.get(u, 0) + 1
                    deg[v] = deg.get(v, 0) + 1
                    if deg[u] > cap or deg[v] > cap:
                        ok = False
                        break
                if not ok:
                    continue
                g = Graph.from_edges(max(verts) + 1 if verts else 0, comb)
                if not g.is_triangle_free():
                    continue
                out.append(frozenset(comb))
        return out

    SA = side_graphs(part.A, pairs_A)
    SB = side_graphs(part.B, pairs_B)
    return [(S, T) for S in SA for T in SB]


def product_view(part: Partition, S, T) -> ProductGraphView:
    return ProductGraphView(part.A, part.B, adjacency_map(S), adjacency_map(T))


def exact_nu(part: Partition, lam, cap: int) -> ExactDistribution:
    """Exact defect-pair distribution: weight lam^{|S|+|T|} * Z_hc(S box T)."""
    states, weights = [], []
    for S, T in defect_states(part, cap):
        view = product_view(part, S, T)
        if view.n_vertices() > MAX_HARDCORE_VERTICES:
            raise BudgetError("product graph too large for exact nu")
        zb = exact_hardcore_Z(view.materialize(), lam)
        states.append((S, T))
        weights.append(lam ** (len(S) + len(T)) * zb)
    return ExactDistribution.from_weights(states, weights)


def exact_defect_Z(part: Partition, lam, cap: int):
    """Normalizing constant of the defect-pair family for one partition."""
    total = 0
    for S, T in defect_states(part, cap):
        view = product_view(part, S, T)
        if view.n_vertices() > MAX_HARDCORE_VERTICES:
            raise BudgetError("product graph too large")
        total += lam ** (len(S) + len(T)) * exact_hardcore_Z(view.materialize(), lam)
    return total


def admissible_imbalances(n: int, max_imbalance=None):
    """k >= 0 with k = n mod 2 and k <= cap (default floor(n/10))."""
    cap = int(n / 10) if max_imbalance is None else max_imbalance
    return [k for k in range(n % 2, cap + 1, 2)]


def exact_weak_count(n: int, lam, cap: int, max_imbalance=None):
    """Partition-summed count: sum_k binom(n,(n+k)/2) * Z_k, with Z_k the
    defect-family constant of a representative split of imbalance k."""
    total = 0
    per_k = {}
    for k in admissible_imbalances(n, max_imbalance):
        na = (n + k) // 2
        part = Partition(n, tuple(range(na)), tuple(range(na, n)))
        zk = exact_defect_Z(part, lam, cap)
        per_k[k] = zk
        total += math.comb(n, na) * zk
    return total, per_k


def tv_distance(p: ExactDistribution, q) -> float:
    """Total variation distance. q may be another ExactDistribution or an
    empirical histogram {state: count-or-mass}."""
    if isinstance(q, ExactDistribution):
        states = set(p.states) | set(q.states)
        return 0.5 * sum(abs(p.prob(s) - q.prob(s)) for s in states)
    total = sum(q.values())
    if total <= 0:
        raise ValueError("empty histogram")
    acc = 0.0
    seen_mass = 0.0
    for s, c in q.items():
        f = c / total
        acc += abs(p.prob(s) - f)
        seen_mass += p.prob(s)
    acc += 1.0 - seen_mass  # exact states never observed
    return 0.5 * acc


def tv_noise_floor(p: ExactDistribution, m: int, rng, reps: int = 20) -> float:
    """Mean plug-in TV of an m-sample empirical histogram drawn from p itself.

    The plug-in estimator is biased upward by about this much, so tests with
    tolerances near the floor compare the bias-corrected value.
    """
    floors = []
    for _ in range(reps):
        counts = rng.multinomial(m, p.probs)
        floors.append(0.5 * float(np.abs(counts / m - p.probs).sum()))
    return float(np.mean(floors))


def calibrated_tv(p: ExactDistribution, histogram, rng, reps: int = 20):
    """(plug-in TV, null floor, bias-corrected TV) for an empirical histogram."""
    m = int(sum(histogram.values()))
    raw = tv_distance(p, histogram)
    floor = tv_noise_floor(p, m, rng, reps)
    return raw, floor, max(0.0, raw - floor)
