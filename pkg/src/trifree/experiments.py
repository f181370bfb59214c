"""Experiment runners and result emission.

Three instruments: an empirical mixing-time measurement for the conditioned
edge chain (exact stationary reference at small n, coupling times beyond),
a slow-mixing demonstration at high density with a subcritical control run,
and a deterministic writer that turns runner outputs into a JSON manifest
plus CSV series and edge-list files.

Demonstration thresholds below were frozen after pilot runs and are part of
the repository's recorded configuration: an aligned run must keep alignment
fraction >= ALIGNMENT_THRESHOLD over its whole trace, the demonstration
succeeds when at least ceil(0.9 * n_runs) runs stay aligned, and the control
chain must bring the cut autocorrelation below CONTROL_AUTOCORR_THRESHOLD
within CONTROL_STEPS updates.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .graph import Graph, Partition, n_words, WORD, write_edge_list
from .glauber import pair_arrays, default_burn_in
from .oracle import exact_mu, tv_distance, tv_noise_floor, BudgetError, MAX_ENUM_N
from .rng import stream, kernel_seed
from .defect import HighDensityConfig
from . import pipeline

SLOW_MIX_STEPS = 10 ** 7
CONTROL_STEPS = 10 ** 6
ALIGNMENT_THRESHOLD = 0.9       # frozen after pilot runs
CONTROL_AUTOCORR_THRESHOLD = 0.1  # frozen after pilot runs
EXPANDER_PAIR_SAMPLES = 1000
MIXING_EXACT_MAX_N = 6          # exact reference needs full enumeration


# ---------------------------------------------------------------------------
# mixing-time measurement


@dataclass(frozen=True)
class MixingReport:
    """Empirical approach to stationarity for the conditioned edge chain.

    mode "exact": tv[i] is the plug-in TV between the empirical histogram of
    n_chains replicas at steps[i] and the exact stationary law. mode
    "coupling": coupling_times holds per-pair coalescence steps (-1 when the
    budget ran out) and tv is empty.
    """

    n: int
    p: float
    mode: str
    n_chains: int
    steps: tuple
    tv: tuple = ()
    coupling_times: tuple = ()
    max_steps: int = 0
    noise_floor: float = 0.0

    def corrected_tv(self) -> tuple:
        """Plug-in TV minus the same-size null floor, clamped at zero."""
        return tuple(max(0.0, v - self.noise_floor) for v in self.tv)

    def coalesced_fraction(self) -> float:
        if not self.coupling_times:
            return 0.0
        ct = np.asarray(self.coupling_times)
        return float((ct >= 0).mean())


def _default_grid(n: int, eps: float = 0.05) -> tuple:
    """Fractions of the default burn-in, rounded to a common base so one
    thinned kernel pass records every grid point."""
    horizon = default_burn_in(n, eps)
    base = max(1, horizon // 20)
    fracs = (0.05, 0.1, 0.2, 0.35, 0.55, 0.8, 1.0)
    grid = sorted({0} | {max(base, round(f * horizon / base) * base)
                   for f in fracs})
    return tuple(int(t) for t in grid)


def _chain_masks(n: int, p: float, steps_grid, rng) -> list:
    """Edge-set bitmasks of one empty-start chain at each positive grid
    point. The grid must consist of multiples of its smallest positive
    entry's gcd; _default_grid guarantees that."""
    positive = [t for t in steps_grid if t > 0]
    if not positive:
        return []
    base = math.gcd(*positive)
    total = max(positive)
    g = Graph(n)
    ii, jj = pair_arrays(n)
    out = np.zeros(total // base, dtype=np.int64)
    kernels.tf_glauber_trajectory_masks(g.bits, g.degree, ii, jj, p, total,
                                        kernel_seed(rng), base, out)
    return [int(out[t // base - 1]) for t in positive]


def run_mixing_experiment(n: int, p: float, *, steps_grid=None,
                          n_chains: int = 4000, n_pairs: int = 200,
                          max_steps: int | None = None, mode: str = "auto",
                          calibrate: bool = False, seed: int = 0,
                          workers: int = 1) -> MixingReport:
    """Measure the empirical mixing of the conditioned chain.

    For n small enough to enumerate, runs n_chains independent replicas from
    the empty graph and reports plug-in TV to the exact stationary law on a
    step grid. Otherwise runs n_pairs coupled chain pairs (empty start vs
    balanced complete bipartite start) under the identical-update coupling
    and reports coalescence times.
    """
    if not 0 <= p < 1:
        raise ValueError("p must lie in [0, 1)")
    if mode == "auto":
        mode = "exact" if n <= MIXING_EXACT_MAX_N else "coupling"
    if mode == "exact":
        if n > MAX_ENUM_N:
            raise BudgetError(f"exact mode needs n <= {MAX_ENUM_N}")
        grid = tuple(steps_grid) if steps_grid is not None else _default_grid(n)
        if sorted(grid) != list(grid) or len(set(grid)) != len(grid):
            raise ValueError("steps grid must be strictly increasing")
        mu = exact_mu(n, p)

        def one_chain(c: int) -> list:
            return _chain_masks(n, p, grid, stream(seed, "mix-chain", n, c))

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(one_chain, range(n_chains)))
        else:
            rows = [one_chain(c) for c in range(n_chains)]
        tv = []
        positive = [t for t in grid if t > 0]
        for i, t in enumerate(grid):
            if t == 0:
                hist = {0: n_chains}
            else:
                j = positive.index(t)
                hist = {}
                for row in rows:
                    hist[row[j]] = hist.get(row[j], 0) + 1
            tv.append(tv_distance(mu, hist))
        floor = 0.0
        if calibrate:
            floor = tv_noise_floor(mu, n_chains, stream(seed, "mix-floor", n))
        return MixingReport(n, p, "exact", n_chains, grid, tv=tuple(tv),
                            noise_floor=floor)

    cap = max_steps if max_steps is not None else 20 * default_burn_in(n, 0.05)
    ii, jj = pair_arrays(n)
    half = n // 2
    y0 = Graph.from_edges(n, [(a, b) for a in range(half)
                              for b in range(half, n)])
    dist0 = y0.edge_count()

    def one_pair(c: int) -> int:
        rng = stream(seed, "mix-pair", n, c)
        x = Graph(n)
        y = y0.copy()
        return int(kernels.tf_pair_coupled_until(
            x.bits, x.degree, y.bits, y.degree, ii, jj, p, cap,
            kernel_seed(rng), dist0))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            times = list(pool.map(one_pair, range(n_pairs)))
    else:
        times = [one_pair(c) for c in range(n_pairs)]
    return MixingReport(n, p, "coupling", n_pairs, (), coupling_times=tuple(times),
                        max_steps=cap)


# ---------------------------------------------------------------------------
# slow-mixing demonstration


@dataclass(frozen=True)
class ExpanderReport:
    """Cross-degree and sampled set-pair expansion checks for one graph
    against a reference partition: every v in A needs d(v, B) >= lam*n/30
    (and symmetrically), and sampled pairs X within A with |X| >= lam*n/100,
    Y within B with |Y| >= n/6 need |E(X,Y)| >= lam*|X||Y|/10."""

    n: int
    lam: float
    min_cross_degree: int
    degree_threshold: float
    degree_ok: bool
    pairs_checked: int
    pair_violations: int
    x_min: int
    y_min: int

    @property
    def is_expander(self) -> bool:
        return self.degree_ok and self.pair_violations == 0


def _side_mask(n: int, vertices) -> np.ndarray:
    """uint64 word mask selecting the given vertices."""
    m = np.zeros(n_words(n), dtype=np.uint64)
    for v in vertices:
        m[v // WORD] |= np.uint64(1 << (v % WORD))
    return m


def expander_report(g: Graph, part: Partition, lam: float, *,
                    n_pairs: int = EXPANDER_PAIR_SAMPLES,
                    rng=None) -> ExpanderReport:
    """Evaluate the expansion conditions on g for the partition (A, B)."""
    if rng is None:
        rng = stream(0, "expander", part.n)
    n = part.n
    deg_thr = lam * n / 30.0
    masks = {0: _side_mask(n, part.A), 1: _side_mask(n, part.B)}
    cross_deg = np.zeros(n, dtype=np.int64)
    for v in range(n):
        other = masks[1 - int(part.side[v])]
        cross_deg[v] = int(np.bitwise_count(g.bits[v] & other).sum())
    min_cross = int(cross_deg.min()) if n > 0 else 0
    x_min = max(1, math.ceil(lam * n / 100.0))
    y_min = max(1, math.ceil(n / 6.0))
    violations = 0
    checked = 0
    for t in range(n_pairs):
        A, B = (part.A, part.B) if t % 2 == 0 else (part.B, part.A)
        if x_min > len(A) or y_min > len(B):
            continue
        nx = int(rng.integers(x_min, len(A) + 1))
        ny = int(rng.integers(y_min, len(B) + 1))
        X = [A[i] for i in rng.choice(len(A), size=nx, replace=False)]
        Y = [B[i] for i in rng.choice(len(B), size=ny, replace=False)]
        ymask = _side_mask(n, Y)
        e_xy = int(np.bitwise_count(g.bits[X] & ymask[None, :]).sum())
        checked += 1
        if e_xy < lam * nx * ny / 10.0:
            violations += 1
    return ExpanderReport(n, lam, min_cross, deg_thr,
                          min_cross >= deg_thr, checked, violations,
                          x_min, y_min)


@dataclass(frozen=True)
class BottleneckTrace:
    """Recorded cut observable of one chain run against a reference
    partition. alignment[i] = cut/edges at the i-th record (1.0 when the
    graph is empty), flips counts crossings of the 1/2 level."""

    steps: tuple
    edges: tuple
    cut: tuple
    aligned_start: bool

    @property
    def alignment(self) -> tuple:
        return tuple(c / e if e > 0 else 1.0
                     for c, e in zip(self.cut, self.edges))

    @property
    def min_alignment(self) -> float:
        a = self.alignment
        return min(a) if a else 1.0

    @property
    def flips(self) -> int:
        a = self.alignment
        return sum(1 for i in range(1, len(a))
                   if (a[i] >= 0.5) != (a[i - 1] >= 0.5))


@dataclass(frozen=True)
class ControlTrace:
    """Cut observable of the subcritical control chain with the smallest
    recorded lag at which its autocorrelation drops below the threshold."""

    p: float
    steps: int
    every: int
    cut: tuple
    decorrelation_lag: int | None
    threshold: float = CONTROL_AUTOCORR_THRESHOLD

    @property
    def decorrelated(self) -> bool:
        return self.decorrelation_lag is not None


@dataclass(frozen=True)
class SlowMixResult:
    """Demo traces plus expander reports for their start configurations.

    density is the demo chain's edge probability (the slow-mixing regime
    parameter), activity the matching edge weight density/(1-density) used
    for the aligned starts and the expansion thresholds.
    """

    n: int
    density: float
    activity: float
    steps: int
    record_every: int
    traces: tuple
    expanders: tuple
    control: ControlTrace | None
    alignment_threshold: float = ALIGNMENT_THRESHOLD

    @property
    def aligned_runs(self) -> int:
        return sum(1 for t in self.traces
                   if t.aligned_start and t.min_alignment >= self.alignment_threshold)

    @property
    def demo_ok(self) -> bool:
        runs = sum(1 for t in self.traces if t.aligned_start)
        return runs > 0 and self.aligned_runs >= math.ceil(0.9 * runs)


def _autocorrelation_lag(series: np.ndarray, every: int, threshold: float):
    """Smallest positive lag (in chain steps) with |autocorrelation| below
    the threshold, or None if no recorded lag qualifies."""
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    var = float(x @ x)
    if var <= 0:
        return every
    for k in range(1, len(x)):
        rho = float(x[:-k] @ x[k:]) / var
        if abs(rho) < threshold:
            return k * every
    return None


def _record_run(g: Graph, side, p: float, steps: int, every: int, seed: int):
    ii, jj = pair_arrays(g.n)
    m = steps // every
    rec_edges = np.zeros(m, dtype=np.int64)
    rec_cut = np.zeros(m, dtype=np.int64)
    kernels.tf_glauber_run_record(g.bits, g.degree, ii, jj,
                                  np.asarray(side, dtype=np.int8), p, m * every,
                                  seed, every, rec_edges, rec_cut)
    steps_axis = tuple(every * (i + 1) for i in range(m))
    return steps_axis, tuple(int(e) for e in rec_edges), tuple(int(c) for c in rec_cut)


def run_slow_mix_demo(n: int = 60, density: float | None = None, *,
                      n_runs: int = 10, steps: int = SLOW_MIX_STEPS,
                      record_every: int | None = None,
                      control_p: float | None = None,
                      control_steps: int = CONTROL_STEPS,
                      expander_pairs: int = EXPANDER_PAIR_SAMPLES,
                      start: str = "sample", with_control: bool = True,
                      seed: int = 0) -> SlowMixResult:
    """Demonstrate the high-density bottleneck.

    The demo chain is the conditioned edge chain at edge probability
    `density` (default 5/sqrt(n), the supercritical regime parameter; the
    subcritical control runs the same chain at control_p, default
    0.3/sqrt(n)). Each demo run starts from a structured sample drawn at
    the matching edge activity density/(1-density) and aligned with its own
    partition (start="sample"), or from the empty graph (start="empty",
    degenerate smoke mode with no alignment claim), then records the cut
    observable for `steps` updates. The control reports how fast the same
    observable decorrelates.
    """
    if start not in ("sample", "empty"):
        raise ValueError(f"unknown start mode {start!r}")
    if density is None:
        density = 5.0 / math.sqrt(n)
    if not 0 < density < 1:
        raise ValueError("density must lie in (0, 1)")
    activity = density / (1.0 - density)
    every = record_every if record_every is not None else max(1, steps // 1000)
    cfg = HighDensityConfig(n=n, lam=activity)
    table = None
    if start == "sample":
        table = pipeline.build_imbalance_table(cfg, seed=seed)
    traces = []
    expanders = []
    for r in range(n_runs):
        rng = stream(seed, "slow-mix", n, r)
        if start == "sample":
            rec = pipeline.sample_high(cfg, seed=int(rng.integers(2 ** 31)),
                                       table=table)
            g, part, aligned = rec.graph.copy(), rec.partition, True
        else:
            half = n // 2
            part = Partition(n, tuple(range(half)), tuple(range(half, n)))
            g, aligned = Graph(n), False
        expanders.append(expander_report(
            g, part, activity, n_pairs=expander_pairs,
            rng=stream(seed, "slow-mix-expander", n, r)))
        steps_axis, edges, cut = _record_run(g, part.side, density, steps,
                                             every, kernel_seed(rng))
        traces.append(BottleneckTrace(steps_axis, edges, cut, aligned))
    control = None
    if with_control:
        cp = control_p if control_p is not None else 0.3 / math.sqrt(n)
        rng = stream(seed, "slow-mix-control", n)
        gc = Graph(n)
        ii, jj = pair_arrays(n)
        burn = default_burn_in(n, 0.05)
        kernels.tf_glauber_run(gc.bits, gc.degree, ii, jj, cp, burn,
                               kernel_seed(rng))
        c_every = max(1, control_steps // 2000)
        side = np.zeros(n, dtype=np.int8)
        side[n // 2:] = 1
        _, _, c_cut = _record_run(gc, side, cp, control_steps, c_every,
                                  kernel_seed(rng))
        lag = _autocorrelation_lag(np.array(c_cut), c_every,
                                   CONTROL_AUTOCORR_THRESHOLD)
        control = ControlTrace(cp, control_steps, c_every, c_cut, lag)
    return SlowMixResult(n, density, activity, steps, every, tuple(traces),
                         tuple(expanders), control)


# ---------------------------------------------------------------------------
# result emission


@dataclass
class RunResult:
    """One named experiment outcome destined for the manifest.

    config must be the fully resolved parameter set (defaults included),
    scalars holds JSON-ready values, series maps name -> {column: sequence},
    graphs maps name -> Graph, written out in the "n m" edge-list format.
    """

    name: str
    config: dict
    scalars: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    graphs: dict = field(default_factory=dict)


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _format_cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit_results(results, out_dir: str) -> str:
    """Write a manifest plus per-result CSV series and edge-list files.

    Outputs are byte-stable for fixed inputs: sorted JSON keys, repr float
    formatting, sorted edge lists, and no timestamps. Returns the manifest
    path. Wall-clock times belong in scalars and are the caller's choice;
    the default runners leave them null so reruns stay byte-identical.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out_dir!r}: {e}") from e
    entries = []
    for res in results:
        files: dict = {"series": {}, "graphs": {}}
        for sname, cols in res.series.items():
            fname = f"{res.name}__{sname}.csv"
            path = os.path.join(out_dir, fname)
            names = list(cols)
            rows = zip(*[cols[c] for c in names]) if names else []
            try:
                with open(path, "w", newline="\n") as f:
                    w = csv.writer(f, lineterminator="\n")
                    w.writerow(names)
                    for row in rows:
                        w.writerow([_format_cell(v) for v in row])
            except OSError as e:
                raise OSError(f"cannot write series file {path!r}: {e}") from e
            files["series"][sname] = fname
        for gname, g in res.graphs.items():
            fname = f"{res.name}__{gname}.edges"
            path = os.path.join(out_dir, fname)
            try:
                with open(path, "w", newline="\n") as f:
                    write_edge_list(g, f)
            except OSError as e:
                raise OSError(f"cannot write graph file {path!r}: {e}") from e
            files["graphs"][gname] = fname
        entries.append({"name": res.name,
                        "config": _jsonable(res.config),
                        "scalars": _jsonable(res.scalars),
                        "files": files})
    manifest = {"schema": 1, "tool": "trifree", "results": entries}
    mpath = os.path.join(out_dir, "manifest.json")
    try:
        with open(mpath, "w", newline="\n") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise OSError(f"cannot write manifest {mpath!r}: {e}") from e
    return mpath
