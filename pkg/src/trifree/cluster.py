"""Cluster expansion machinery for the hard-core model.

A cluster is a tuple (v_1, ..., v_k) of host vertices, repeats allowed, whose
incompatibility graph (i ~ j iff v_i = v_j or v_i adjacent v_j in the host)
is connected. The log partition function expands as

    log Z = sum over clusters of phi(Gamma) * lam^{|Gamma|}

with phi the Ursell function. Truncating at size k leaves a tail bounded, for
lam <= 1/(2e(Delta+1)), by (2e)^k Delta^{k-|U|} lam^k summed over pivots.

Tuples with the same entry multiset share phi, so the series is evaluated
over connected vertex sets and count profiles with multinomial multiplicity;
enumerate_clusters still yields individual tuples, which is what the tests
exercise.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .graph import Graph
from .oracle import BudgetError

TWO_E = 2 * math.e


def _host_neighbors(host, v):
    return host.neighbors(v)


def _host_adjacent(host, u, v):
    if isinstance(host, Graph):
        return host.has_edge(u, v)
    return host.adjacent(u, v)


@lru_cache(maxsize=1 << 18)
def signed_connected_sum(adj_masks: tuple) -> int:
    """Sum of (-1)^{|A|} over spanning connected edge subsets A of the graph
    given by neighbor bitmasks. Subset-convolution DP:

        t(S) = [no edge inside S],  c(S) = t(S) - sum_{P proper, min(S) in P} c(P) t(S\\P)
    """
    k = len(adj_masks)
    full = (1 << k) - 1

    def t(S):
        m = S
        while m:
            v = (m & -m).bit_length() - 1
            if adj_masks[v] & S:
                return 0
            m &= m - 1
        return 1

    c_memo = {}

    def c(S):
        if S & (S - 1) == 0:
            return 1
        got = c_memo.get(S)
        if got is not None:
            return got
        low = S & -S
        acc = t(S)
        P = (S - 1) & S
        while P:
            if P & low and P != S:
                acc -= c(P) * t(S ^ P)
            P = (P - 1) & S
        c_memo[S] = acc
        return acc

    return c(full)


def incompatibility_masks(host, tup) -> tuple:
    """Neighbor bitmasks of the incompatibility graph of a tuple."""
    k = len(tup)
    masks = []
    for i in range(k):
        m = 0
        for j in range(k):
            if i != j and (tup[i] == tup[j] or _host_adjacent(host, tup[i], tup[j])):
                m |= 1 << j
        masks.append(m)
    return tuple(masks)


def _is_connected(masks) -> bool:
    k = len(masks)
    if k == 0:
        return False
    seen = 1
    frontier = 1
    while frontier:
        nxt = 0
        m = frontier
        while m:
            v = (m & -m).bit_length() - 1
            nxt |= masks[v]
            m &= m - 1
        frontier = nxt & ~seen
        seen |= nxt
    return seen == (1 << k) - 1


def ursell(host, tup) -> Fraction:
    """phi(Gamma) = (1/k!) sum_{A spanning connected} (-1)^{|A|}."""
    masks = incompatibility_masks(host, tup)
    if not _is_connected(masks):
        raise ValueError(f"tuple {tup!r} has a disconnected incompatibility graph")
    return Fraction(signed_connected_sum(masks), math.factorial(len(tup)))


def _connected_sets_from(host, start, kmax, order, min_rank=None, budget=None):
    """Connected vertex sets W with start <= W, |W| <= kmax.

    order maps vertex -> sortable rank; when min_rank is given, only vertices
    with rank > min_rank may be added (used to enumerate each set once, keyed
    by its minimum vertex).
    """
    base = frozenset(start)
    seen = {base}
    stack = [base]
    out = []
    while stack:
        W = stack.pop()
        out.append(W)
        if budget is not None and len(out) > budget:
            raise BudgetError("cluster enumeration budget exceeded")
        if len(W) >= kmax:
            continue
        boundary = set()
        for x in W:
            for y in _host_neighbors(host, x):
                if y not in W:
                    boundary.add(y)
        for y in boundary:
            if min_rank is not None and order(y) <= min_rank:
                continue
            W2 = W | {y}
            fz = frozenset(W2)
            if fz not in seen:
                seen.add(fz)
                stack.append(fz)
    return out


def _induced_connected(host, W) -> bool:
    W = set(W)
    start = next(iter(W))
    seen = {start}
    stack = [start]
    while stack:
        x = stack.pop()
        for y in _host_neighbors(host, x):
            if y in W and y not in seen:
                seen.add(y)
                stack.append(y)
    return seen == W


def _profiles(nw, total):
    """Count vectors of length nw, each >= 1, summing to total."""
    if nw == 1:
        yield (total,)
        return
    for first in range(1, total - nw + 2):
        for rest in _profiles(nw - 1, total - first):
            yield (first,) + rest


def enumerate_clusters(host, pivot, kmax: int, budget: int = 200_000):
    """Yield every cluster (tuple, connected incompatibility graph) of size
    <= kmax whose entries include all vertices of pivot, each exactly once.
    """
    if kmax < 1:
        return
    pivot = tuple(pivot)
    if not pivot:
        raise ValueError("pivot must contain at least one vertex")
    order = _rank_fn(host)
    count = 0
    for W in _connected_sets_from(host, {pivot[0]}, kmax, order, budget=budget):
        if not set(pivot) <= W:
            continue
        if not _induced_connected(host, W):
            continue
        Wl = sorted(W, key=order)
        for s in range(len(Wl), kmax + 1):
            for prof in _profiles(len(Wl), s):
                entries = []
                for x, c in zip(Wl, prof):
                    entries.extend([x] * c)
                for tup in _distinct_permutations(entries):
                    count += 1
                    if count > budget:
                        raise BudgetError("cluster enumeration budget exceeded")
                    yield tup


def _distinct_permutations(entries):
    """All distinct orderings of a multiset, lexicographic in ranks."""
    entries = sorted(entries, key=lambda x: (repr(type(x)), repr(x)))
    n = len(entries)
    out = []

    def rec(prefix, remaining):
        if not remaining:
            out.append(tuple(prefix))
            return
        prev = object()
        for i, x in enumerate(remaining):
            if x == prev:
                continue
            prev = x
            rec(prefix + [x], remaining[:i] + remaining[i + 1:])

    rec([], entries)
    return out


def _rank_fn(host):
    # product-view vertices are (a, b) int pairs; lexicographic order is a
    # total order, so no materialized ranking over |A|x|B| vertices is needed
    return lambda v: v


@dataclass
class TruncatedSeries:
    """Partial cluster-expansion sum with its declared tail certificate."""

    order: int
    partial: float
    tail_bound: float
    certificate_valid: bool

    def bounds(self):
        return self.partial - self.tail_bound, self.partial + self.tail_bound


def _set_series_coeffs(host, W, order, kmax, coeffs, scale=1):
    """Accumulate sum over profiles on W of multinomial * phi into coeffs[s]."""
    Wl = sorted(W, key=order)
    nw = len(Wl)
    for s in range(nw, kmax + 1):
        for prof in _profiles(nw, s):
            entries = []
            for x, c in zip(Wl, prof):
                entries.extend([x] * c)
            phi = ursell(host, tuple(entries))
            mult = math.factorial(s)
            for c in prof:
                mult //= math.factorial(c)
            coeffs[s] = coeffs.get(s, Fraction(0)) + scale * mult * phi


def cluster_series_coeffs(host, kmax: int, budget: int = 500_000) -> dict:
    """Exact rational coefficients c_s with truncated log Z = sum c_s lam^s.

    Sums over all clusters of size <= kmax, enumerated once each via their
    minimum vertex.
    """
    order = _rank_fn(host)
    coeffs = {}
    n_sets = 0
    for v in _vertices(host):
        for W in _connected_sets_from(host, {v}, kmax, order,
                                      min_rank=order(v), budget=budget):
            n_sets += 1
            if n_sets > budget:
                raise BudgetError("cluster enumeration budget exceeded")
            _set_series_coeffs(host, W, order, kmax, coeffs)
    return coeffs


def _vertices(host):
    if isinstance(host, Graph):
        return range(host.n)
    return host.vertices()


def _n_vertices(host):
    if isinstance(host, Graph):
        return host.n
    return host.n_vertices()


def _max_degree(host):
    return host.max_degree()


def eval_coeffs(coeffs: dict, lam):
    if isinstance(lam, Fraction):
        return sum(c * lam ** s for s, c in coeffs.items())
    return float(sum(float(c) * lam ** s for s, c in coeffs.items()))


def truncated_log_Z(host, lam, kmax: int = 4, budget: int = 500_000) -> TruncatedSeries:
    """Truncated cluster expansion of log Z_host(lam) with tail certificate
    n * (2e)^{k+1} * Delta^k * lam^{k+1} aggregated over single-vertex pivots.
    """
    coeffs = cluster_series_coeffs(host, kmax, budget)
    partial = eval_coeffs(coeffs, lam)
    delta = _max_degree(host)
    n = _n_vertices(host)
    lam_f = float(lam)
    tail = n * TWO_E ** (kmax + 1) * max(delta, 1) ** kmax * lam_f ** (kmax + 1)
    valid = lam_f <= 1.0 / (TWO_E * (delta + 1))
    return TruncatedSeries(order=kmax, partial=partial, tail_bound=tail,
                           certificate_valid=valid)


def ratio_series_coeffs(host_with, host_without, added_pairs, kmax: int,
                        budget: int = 500_000) -> dict:
    """Coefficients of the truncated log(Z_with / Z_without).

    Clusters not meeting both endpoints of an added pair have identical
    incompatibility graphs in the two hosts and cancel; what remains is the
    difference of the two constrained sums. The size-2 survivors are the
    added pairs themselves, contributing -lam^2 per pair.
    """
    order = _rank_fn(host_with)
    coeffs = {}
    for host, scale in ((host_with, 1), (host_without, -1)):
        seen = set()
        n_sets = 0
        for pair in added_pairs:
            for W in _connected_sets_from(host, {pair[0]}, kmax, order, budget=budget):
                if pair[1] not in W:
                    continue
                if not _induced_connected(host, W):
                    continue
                if W in seen:
                    continue
                # keep only sets containing some added pair entirely
                if not any(u in W and v in W for u, v in added_pairs):
                    continue
                seen.add(W)
                n_sets += 1
                if n_sets > budget:
                    raise BudgetError("cluster enumeration budget exceeded")
                _set_series_coeffs(host, W, order, kmax, coeffs, scale=scale)
    return {s: c for s, c in coeffs.items() if c != 0}


def truncated_log_ratio(host_with, host_without, added_pairs, lam,
                        kmax: int = 4, budget: int = 500_000) -> TruncatedSeries:
    """Truncated log(Z_with/Z_without) for hosts differing by added_pairs,
    with tail certificate (#pairs) * (2e)^{k+1} * Delta^{k-1} * lam^{k+1}
    over the two-vertex pivots."""
    coeffs = ratio_series_coeffs(host_with, host_without, added_pairs, kmax, budget)
    partial = eval_coeffs(coeffs, lam)
    delta = _max_degree(host_with)
    lam_f = float(lam)
    tail = len(added_pairs) * TWO_E ** (kmax + 1) * max(delta, 1) ** (kmax - 1) \
        * lam_f ** (kmax + 1)
    valid = lam_f <= 1.0 / (TWO_E * (delta + 1))
    return TruncatedSeries(order=kmax, partial=partial, tail_bound=tail,
                           certificate_valid=valid)


def spanning_tree_count(g: Graph) -> int:
    """Kirchhoff: determinant of any cofactor of the Laplacian."""
    if g.n == 1:
        return 1
    L = np.zeros((g.n, g.n))
    for i, j in g.edges():
        L[i, i] += 1
        L[j, j] += 1
        L[i, j] -= 1
        L[j, i] -= 1
    return int(round(np.linalg.det(L[1:, 1:])))


def penrose_bound_check(g: Graph):
    """(|signed connected sum|, spanning tree count, bound holds) for a
    connected incompatibility graph: the alternating sum over spanning
    connected edge subsets is at most the number of spanning trees."""
    masks = []
    for i in range(g.n):
        m = 0
        for j in g.neighbors(i):
            m |= 1 << j
        masks.append(m)
    if not _is_connected(tuple(masks)):
        raise ValueError("graph must be connected")
    a = abs(signed_connected_sum(tuple(masks)))
    t = spanning_tree_count(g)
    return a, t, a <= t
