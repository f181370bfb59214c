"""Low-density sampler: heat-bath edge dynamics conditioned on triangle-freeness.

Each update picks a uniform vertex pair and resamples it: the pair ends up
present iff an independent uniform lands below p and its presence closes no
triangle. The chain is irreducible on triangle-free graphs and reversible
w.r.t. the conditioned measure. A monotone coupling to the unconditioned
G(n,p) dynamics keeps the conditioned state dominated by the free one, which
is what drives the burn-in bound used by sample_low.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import kernels
from .graph import Graph, edge_from_index
from .rng import kernel_seed, stream

SUBCRITICAL_COEFF = 1.0 / math.sqrt(2.0)
DEFAULT_BURNIN_CONST = 6.0


@lru_cache(maxsize=None)
def pair_arrays(n: int):
    """Flat (i, j) arrays over all vertex pairs, for the compiled kernels."""
    ii, jj = np.triu_indices(n, 1)
    return ii.astype(np.int64), jj.astype(np.int64)


def random_pair(n: int, rng) -> tuple[int, int]:
    k = int(rng.integers(n * (n - 1) // 2))
    return edge_from_index(n, k)


def apply_update(g: Graph, i: int, j: int, u: float, p: float) -> None:
    """Resample pair (i, j) from its conditional law given the rest of g,
    driving the decision with the uniform u."""
    want = u < p and g.common_neighbors(i, j) == 0
    present = g.has_edge(i, j)
    if want and not present:
        g.add_edge(i, j)
    elif not want and present:
        g.remove_edge(i, j)


def free_update(g: Graph, i: int, j: int, u: float, p: float) -> None:
    """Unconditioned G(n,p) heat bath on the same pair and uniform."""
    want = u < p
    present = g.has_edge(i, j)
    if want and not present:
        g.add_edge(i, j)
    elif not want and present:
        g.remove_edge(i, j)


class ChainState:
    """A running chain: current graph plus an update counter."""

    __slots__ = ("graph", "step")

    def __init__(self, graph: Graph, step: int = 0):
        self.graph = graph
        self.step = step


def glauber_step(state, p: float, rng) -> tuple[int, int]:
    """One update of the conditioned chain (Graph or ChainState argument);
    returns the pair touched."""
    if isinstance(state, ChainState):
        g = state.graph
        state.step += 1
    else:
        g = state
    i, j = random_pair(g.n, rng)
    apply_update(g, i, j, float(rng.random()), p)
    return i, j


def coupled_step(x: Graph, y: Graph, p: float, rng) -> tuple[int, int]:
    """Shared (pair, uniform) update of the conditioned chain x and the free
    chain y. Preserves x subseteq y."""
    i, j = random_pair(x.n, rng)
    u = float(rng.random())
    apply_update(x, i, j, u, p)
    free_update(y, i, j, u, p)
    return i, j


def default_burn_in(n: int, eps: float, K: float = DEFAULT_BURNIN_CONST) -> int:
    """Number of updates giving TV error at most eps in the subcritical
    range: K * n^2 * log(n / eps)."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    return int(math.ceil(K * n * n * math.log(n / eps)))


def subcritical(n: int, p: float) -> bool:
    return p * math.sqrt(n) < SUBCRITICAL_COEFF


@dataclass(frozen=True)
class LowDensityConfig:
    """Chain parameters for the conditioned sampler: edge probability p,
    burn-in constant K (T = K * n^2 * log(n/eps)), and the subcritical slack
    c bounding the guaranteed range p <= c/sqrt(n)."""

    n: int
    p: float
    K: float = DEFAULT_BURNIN_CONST
    c: float = SUBCRITICAL_COEFF

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be nonnegative")
        if not 0 <= self.p < 1:
            raise ValueError("p must lie in [0, 1)")
        if self.K <= 0:
            raise ValueError("K must be positive")

    def in_regime(self) -> bool:
        return self.n > 0 and self.p * math.sqrt(self.n) < self.c


def _resolve_low(cfg_or_n, p, K) -> LowDensityConfig:
    if isinstance(cfg_or_n, LowDensityConfig):
        if p is not None:
            raise TypeError("p is already part of the config")
        return cfg_or_n
    return LowDensityConfig(int(cfg_or_n), float(p), K)


def sample_low(n, p: float | None = None, *, eps: float = 1e-3,
               K: float = DEFAULT_BURNIN_CONST, seed: int = 0,
               steps: int | None = None, start: Graph | None = None,
               use_kernel: bool = True) -> Graph:
    """Approximate sample from G(n,p) conditioned on triangle-freeness.

    Runs the edge heat bath from the empty graph (or `start`) for
    K * n^2 * log(n/eps) updates. The burn-in guarantee needs
    p <= c / sqrt(n) with c < 1/sqrt(2); outside that range the chain still
    targets the right measure but only a warning marks the missing bound.
    Accepts either (n, p) or a LowDensityConfig in place of n.
    """
    cfg = _resolve_low(n, p, K)
    n, p, K = cfg.n, cfg.p, cfg.K
    if n < 2:
        return Graph(max(n, 0)) if start is None else start.copy()
    if not cfg.in_regime():
        warnings.warn(
            f"p={p:.4g} is outside the low-density range p < "
            f"{cfg.c:.4g}/sqrt(n); burn-in bound not guaranteed",
            RuntimeWarning, stacklevel=2)
    g = Graph(n) if start is None else start.copy()
    if start is not None and not g.is_triangle_free():
        raise ValueError("start graph must be triangle-free")
    T = default_burn_in(n, eps, K) if steps is None else int(steps)
    rng = stream(seed, "sample-low", n, p, eps, K, steps)
    if use_kernel:
        ei, ej = pair_arrays(n)
        kernels.tf_glauber_run(g.bits, g.degree, ei, ej, float(p), T,
                               kernel_seed(rng))
    else:
        for _ in range(T):
            glauber_step(g, p, rng)
    return g


@dataclass(frozen=True)
class ContractionReport:
    n: int
    p: float
    trials: int
    mean_distance: float
    std_err: float
    bound: float
    bound_valid: bool
    ok: bool


def contraction_bound(n: int, p: float) -> tuple[float, bool]:
    """One-step expected-distance factor for adjacent states under the
    shared-update coupling: 1 - delta / C(n,2) with
    delta = 1 - 2(np + n^(1/3)) p. Only meaningful while delta > 0."""
    delta = 1.0 - 2.0 * (n * p + n ** (1.0 / 3.0)) * p
    n_pairs = n * (n - 1) // 2
    return 1.0 - delta / n_pairs, delta > 0


def _adjacent_pair(g: Graph, rng) -> Graph | None:
    """A triangle-free neighbor of g at edge-Hamming distance 1, or None."""
    for _ in range(64):
        i, j = random_pair(g.n, rng)
        other = g.copy()
        if other.has_edge(i, j):
            other.remove_edge(i, j)
            return other
        if other.common_neighbors(i, j) == 0:
            other.add_edge(i, j)
            return other
    return None


def estimate_contraction(n, p: float | None = None, *, trials: int = 2000,
                         seed: int = 0, eps: float = 1e-2) -> ContractionReport:
    """Measure the one-step expected distance between coupled chains started
    from adjacent triangle-free states drawn near stationarity, and compare
    it with the analytic factor. Accepts (n, p) or a LowDensityConfig."""
    cfg = _resolve_low(n, p, DEFAULT_BURNIN_CONST)
    n, p = cfg.n, cfg.p
    rng = stream(seed, "contraction", n, p, trials)
    bound, valid = contraction_bound(n, p)
    dists = np.empty(trials)
    t = 0
    while t < trials:
        sub = int(rng.integers(1 << 32))
        x = sample_low(n, p, eps=eps, seed=sub)
        y = _adjacent_pair(x, rng)
        if y is None:
            continue
        i, j = random_pair(n, rng)
        u = float(rng.random())
        apply_update(x, i, j, u, p)
        apply_update(y, i, j, u, p)
        dists[t] = bin(x.edge_mask() ^ y.edge_mask()).count("1")
        t += 1
    mean = float(dists.mean())
    se = float(dists.std(ddof=1) / math.sqrt(trials))
    ok = mean <= bound + 3.0 * se
    return ContractionReport(n, p, trials, mean, se, bound, valid, ok)


def exact_transition_matrix(n: int, p):
    """Single-update transition matrix over all triangle-free graphs on n
    vertices, in exact arithmetic when p is a Fraction.

    Returns (states, M): states are edge-set bitmasks in pair-index order and
    M[a][b] is the probability of moving from states[a] to states[b].
    """
    from .oracle import triangle_free_masks

    pF = p if isinstance(p, Fraction) else Fraction(p)
    states = triangle_free_masks(n)
    index = {s: a for a, s in enumerate(states)}
    n_pairs = n * (n - 1) // 2
    tri_by_pair = [[] for _ in range(n_pairs)]
    from .graph import edge_index
    for a in range(n):
        for b in range(a + 1, n):
            for c in range(b + 1, n):
                ab = edge_index(n, a, b)
                ac = edge_index(n, a, c)
                bc = edge_index(n, b, c)
                tri_by_pair[ab].append((ac, bc))
                tri_by_pair[ac].append((ab, bc))
                tri_by_pair[bc].append((ab, ac))
    size = len(states)
    M = [[Fraction(0)] * size for _ in range(size)]
    pick = Fraction(1, n_pairs)
    for a, s in enumerate(states):
        for k in range(n_pairs):
            allowed = all(not (s >> k1 & 1 and s >> k2 & 1)
                          for k1, k2 in tri_by_pair[k])
            p_on = pF if allowed else Fraction(0)
            s_on = s | (1 << k)
            s_off = s & ~(1 << k)
            if p_on:
                M[a][index[s_on]] += pick * p_on
            M[a][index[s_off]] += pick * (1 - p_on)
    return states, M


def stationary_weights(states, lam) -> list:
    """Unnormalized stationary weights lam^{edge count} for the given states."""
    return [lam ** bin(s).count("1") for s in states]
