"""Hard-core model subroutines: single-site dynamics and partition-function
estimation by a downward activity ladder.

Hosts are either Graph instances or ProductGraphView instances; views are
materialized to explicit bit rows before the compiled chain runs. Edgeless
hosts short-circuit to exact product formulas: every vertex is independently
occupied with probability lam/(1+lam) and Z = (1+lam)^vertices.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .graph import Graph, ProductGraphView
from .rng import kernel_seed, stream

HC_BURNIN_CONST = 8.0
PILOT_SAMPLES = 200
MIN_RUNG_SAMPLES = 200
FINAL_RUNG_MEAN_SIZE = 0.5


def _host_graph(host) -> tuple[Graph, list]:
    """Explicit-bit-row form of a host plus the vertex labels in row order."""
    if isinstance(host, Graph):
        return host, list(range(host.n))
    if isinstance(host, ProductGraphView):
        return host.materialize(), list(host.vertices())
    raise TypeError(f"unsupported host type {type(host).__name__}")


class IndependentSetState:
    """Occupancy state of the hard-core chain on a host graph or view."""

    __slots__ = ("host", "occupied")

    def __init__(self, host, occupied=()):
        self.host = host
        self.occupied = set(occupied)

    @property
    def count(self) -> int:
        return len(self.occupied)

    def is_independent(self) -> bool:
        occ = list(self.occupied)
        if isinstance(self.host, Graph):
            return not any(self.host.has_edge(u, v)
                           for i, u in enumerate(occ) for v in occ[i + 1:])
        return not any(self.host.adjacent(u, v)
                       for i, u in enumerate(occ) for v in occ[i + 1:])


def hc_glauber_step(state: IndependentSetState, lam: float, rng) -> None:
    """One heat-bath update: a uniform vertex ends occupied with probability
    lam/(1+lam) iff it has no occupied neighbor."""
    host = state.host
    if isinstance(host, Graph):
        v = int(rng.integers(host.n))
    else:
        verts = list(host.vertices())
        v = verts[int(rng.integers(len(verts)))]
    u = float(rng.random())
    occ = state.occupied
    want = False
    if u < lam / (1.0 + lam):
        want = all(w not in occ for w in host.neighbors(v))
    if want:
        occ.add(v)
    else:
        occ.discard(v)


def hc_burn_in(nv: int, eps: float, K: float = HC_BURNIN_CONST) -> int:
    if nv <= 0:
        return 0
    return int(math.ceil(K * nv * (math.log(nv + 1) + math.log(1.0 / eps))))


def _check_activity(lam: float, max_degree: int) -> None:
    if max_degree > 0 and lam > 1.0 / max_degree:
        warnings.warn(
            f"activity lam={lam:.4g} exceeds 1/max_degree="
            f"{1.0 / max_degree:.4g}; hard-core mixing bound not guaranteed",
            RuntimeWarning, stacklevel=3)


def hc_sample(host, lam: float, *, eps: float = 1e-3, seed: int = 0,
              steps: int | None = None, use_kernel: bool = True) -> frozenset:
    """Approximate sample from the hard-core measure on the host.

    Edgeless hosts are sampled exactly by independent Bernoulli draws; other
    hosts run the occupancy heat bath from the empty configuration.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    g, labels = _host_graph(host)
    nv = g.n
    if nv == 0:
        return frozenset()
    rng = stream(seed, "hc-sample", nv, lam, eps, steps)
    if g.edge_count() == 0:
        hits = rng.random(nv) < lam / (1.0 + lam)
        return frozenset(labels[v] for v in np.flatnonzero(hits))
    _check_activity(lam, g.max_degree())
    T = hc_burn_in(nv, eps) if steps is None else int(steps)
    if use_kernel:
        occ = np.zeros(g.bits.shape[1], dtype=np.uint64)
        kernels.hc_glauber_run(g.bits, occ, float(lam), T, kernel_seed(rng))
        out = []
        for v in range(nv):
            if occ[v // 64] >> np.uint64(v % 64) & np.uint64(1):
                out.append(labels[v])
        return frozenset(out)
    state = IndependentSetState(g)
    for _ in range(T):
        hc_glauber_step(state, lam, rng)
    return frozenset(labels[v] for v in state.occupied)


@dataclass(frozen=True)
class LogEstimate:
    """Estimate of a log partition function with an accuracy contract:
    |log_value - log Z| <= eps with probability at least 1 - delta."""
    log_value: float
    eps: float
    delta: float
    n_rungs: int = 0
    n_samples: int = 0
    exact: bool = False
    certificate_valid: bool | None = None

    @property
    def value(self) -> float:
        return math.exp(self.log_value)


def _rung_occupancies(bits, occ, lam, n_samples, gap, seed) -> np.ndarray:
    out = np.empty(n_samples, dtype=np.int64)
    kernels.hc_glauber_sweep_occupancies(bits, occ, float(lam), n_samples,
                                         gap, seed, out)
    return out


def _single_ladder(g: Graph, lam: float, eps: float, delta: float,
                   rng) -> tuple[float, int, int]:
    """One full downward ladder on an explicit host; returns
    (log Z estimate, rung count, total samples)."""
    nv = g.n
    gap = max(2 * nv, 1)
    burn = hc_burn_in(nv, 0.1)
    log_z = 0.0
    total = 0
    rungs = []
    cur = lam
    occ = np.zeros(g.bits.shape[1], dtype=np.uint64)
    kernels.hc_glauber_run(g.bits, occ, float(cur), burn, kernel_seed(rng))
    while True:
        sizes = _rung_occupancies(g.bits, occ, cur, PILOT_SAMPLES, gap,
                                  kernel_seed(rng))
        total += PILOT_SAMPLES
        mbar = float(sizes.mean())
        if cur * nv <= 0.5 or mbar <= FINAL_RUNG_MEAN_SIZE:
            nxt = 0.0
        else:
            nxt = cur * math.exp(-1.0 / (1.0 + mbar))
        ratios = (nxt / cur) ** sizes
        mean = float(ratios.mean())
        if mean <= 0.0:
            raise RuntimeError("degenerate ladder rung: no mass at the "
                               "lower activity; refine the schedule")
        relvar = float(ratios.var(ddof=1)) / mean ** 2 if PILOT_SAMPLES > 1 else 1.0
        rungs.append([cur, nxt, sizes, relvar])
        if nxt == 0.0:
            break
        cur = nxt
        occ_new = np.zeros_like(occ)
        kernels.hc_glauber_run(g.bits, occ_new, float(cur), burn,
                               kernel_seed(rng))
        occ = occ_new
    L = len(rungs)
    var_budget = eps * eps * delta / L
    for hi, lo, pilot_sizes, relvar in rungs:
        need = int(math.ceil(1.5 * max(relvar, 1e-4) / var_budget))
        need = max(need, MIN_RUNG_SAMPLES)
        extra = max(need - PILOT_SAMPLES, 0)
        occ = np.zeros(g.bits.shape[1], dtype=np.uint64)
        kernels.hc_glauber_run(g.bits, occ, float(hi), burn, kernel_seed(rng))
        sizes = _rung_occupancies(g.bits, occ, hi, extra, gap,
                                  kernel_seed(rng)) if extra else None
        total += extra
        all_sizes = pilot_sizes if sizes is None else np.concatenate(
            [pilot_sizes, sizes])
        mean = float(((lo / hi) ** all_sizes).mean())
        if mean <= 0.0:
            raise RuntimeError("degenerate ladder rung after refinement")
        log_z -= math.log(mean)
    return log_z, L, total


def hc_estimate_Z(host, lam: float, *, eps: float = 0.1, delta: float = 0.05,
                  seed: int = 0) -> LogEstimate:
    """Relative-error estimate of the hard-core partition function.

    Telescopes Z(lam) through a decreasing activity schedule down to the
    empty-configuration endpoint Z(0) = 1. Each rung estimates
    Z(next)/Z(cur) = E_cur[(next/cur)^occupied] from thinned chain samples
    at the larger activity; Chebyshev sizing covers delta >= 0.05 directly
    and a median of independent replicates covers smaller delta.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if not 0 < eps:
        raise ValueError("eps must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    g, _ = _host_graph(host)
    nv = g.n
    if nv == 0 or lam == 0.0:
        return LogEstimate(0.0, 0.0, 0.0, exact=True)
    if g.edge_count() == 0:
        return LogEstimate(nv * math.log1p(lam), 0.0, 0.0, exact=True)
    _check_activity(lam, g.max_degree())
    rng = stream(seed, "hc-z", nv, g.edge_count(), lam, eps, delta)
    if delta >= 0.05:
        log_z, L, total = _single_ladder(g, lam, eps, delta, rng)
        return LogEstimate(log_z, eps, delta, L, total)
    reps = int(math.ceil(8.0 * math.log(1.0 / delta)))
    if reps % 2 == 0:
        reps += 1
    vals = []
    L = total = 0
    for _ in range(reps):
        log_z, rung_count, samples = _single_ladder(g, lam, eps, 0.25, rng)
        vals.append(log_z)
        L = rung_count
        total += samples
    return LogEstimate(float(np.median(vals)), eps, delta, L, total)
