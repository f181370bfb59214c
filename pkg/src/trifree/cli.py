"""Command-line front end.

Subcommands cover both samplers, both counters, the exact reference
computations, the two experiment runners, and a deterministic self-test
battery. Every run can emit a manifest (JSON) plus CSV series and edge-list
files via --out; outputs are byte-stable for a fixed seed and config.

Shared flags: --seed (master seed for every RNG stream), --out (output
directory; the TRIFREE_OUT_DIR environment variable supplies it when the
flag is absent), --config FILE (plain-text KEY=VALUE lines mirroring the
flag names; explicit flags win), --timing (record wall-clock seconds in the
manifest; off by default so reruns stay byte-identical), --workers.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass, asdict
from fractions import Fraction

from . import oracle, pipeline, experiments
from .glauber import (sample_low, estimate_contraction, LowDensityConfig,
                      DEFAULT_BURNIN_CONST)
from .defect import (HighDensityConfig, sample_defects, estimate_Zw,
                     ALPHA_DEFAULT)
from .hardcore import hc_sample, hc_estimate_Z
from .cluster import truncated_log_Z
from .graph import Graph, Partition
from .rng import stream
from .experiments import RunResult, emit_results

ENV_OUT_DIR = "TRIFREE_OUT_DIR"


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved invocation: subcommand, its parameters, and the shared
    plumbing. The master seed determines every RNG stream of the run."""

    subcommand: str
    params: dict
    seed: int
    out_dir: str | None
    timing: bool
    workers: int


def _derived_seed(seed: int, *labels) -> int:
    return int(stream(seed, "cli", *labels).integers(2 ** 63))


def _number(text: str):
    """Numeric CLI value; a '/' makes it an exact rational."""
    if "/" in text:
        return Fraction(text)
    return float(text)


def _steps_list(text: str):
    return tuple(int(t) for t in text.split(","))


def parse_config_file(path: str) -> dict:
    """KEY=VALUE lines, # comments, keys case-insensitive with - or _."""
    entries = {}
    try:
        with open(path) as f:
            for ln, line in enumerate(f, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(
                        f"{path}:{ln}: expected KEY=VALUE, got {line!r}")
                key, _, val = line.partition("=")
                entries[key.strip().lower().replace("-", "_")] = val.strip()
    except OSError as e:
        raise OSError(f"cannot read config file {path!r}: {e}") from e
    return entries


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(action: argparse.Action, raw: str):
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"boolean flag {action.dest} got {raw!r}")
    if action.type is not None:
        return action.type(raw)
    return raw


def apply_config_file(ns: argparse.Namespace, entries: dict, actions) -> None:
    """Fill config-file values into every destination the command line left
    at its default. An unknown key is an error, a typo-safety choice."""
    by_dest = {}
    for action in actions:
        if action.dest not in ("help", "==SUPPRESS=="):
            by_dest[action.dest] = action
    for key, raw in entries.items():
        action = by_dest.get(key)
        if action is None:
            raise ValueError(f"config key {key!r} does not match any flag")
        if getattr(ns, action.dest) == action.default:
            setattr(ns, action.dest, _convert(action, raw))


def _high_config(ns) -> HighDensityConfig:
    return HighDensityConfig(
        n=ns.n, lam=float(ns.lam), alpha=ns.alpha, cap=ns.cap, mode=ns.mode,
        series_order=ns.series_order, max_imbalance=ns.max_imbalance)


def _representative_partition(n: int, imbalance: int) -> Partition:
    na = (n + imbalance) // 2
    return Partition(n, tuple(range(na)), tuple(range(na, n)))


# ---------------------------------------------------------------------------
# subcommand handlers: each returns (printed lines, RunResults)


def _run_sample_low(rc: RunConfig):
    ns = rc.params
    cfg = LowDensityConfig(ns["n"], float(ns["p"]), K=ns["burn_const"])
    if not cfg.in_regime():
        print(f"note: p sqrt(n) = {cfg.p * math.sqrt(cfg.n):.3f} exceeds "
              f"{cfg.c:.4f}; burn-in bound not guaranteed", file=sys.stderr)
    graphs = {}
    counts = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for i in range(ns["count"]):
            g = sample_low(cfg, eps=ns["eps"],
                           seed=_derived_seed(rc.seed, "sample-low", i))
            graphs[f"sample{i:03d}"] = g
            counts.append(g.edge_count())
            print(f"sample {i}: {g.edge_count()} edges")
    res = RunResult("sample-low", asdict(rc),
                    scalars={"edge_counts": counts},
                    graphs=graphs)
    return [res]


def _run_sample_high(rc: RunConfig):
    ns = rc.params
    cfg = _high_config(argparse.Namespace(**ns))
    table = pipeline.build_imbalance_table(cfg, seed=rc.seed)
    graphs = {}
    ks, defect_counts, crossing_counts, cuts = [], [], [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for i in range(ns["count"]):
            rec = pipeline.sample_high(
                cfg, eps=ns["eps"],
                seed=_derived_seed(rc.seed, "sample-high", i), table=table)
            rec.validate()
            graphs[f"sample{i:03d}"] = rec.graph
            ks.append(rec.diagnostics["k"])
            defect_counts.append(rec.diagnostics["defect_edges"])
            crossing_counts.append(rec.diagnostics["crossing_edges"])
            cuts.append(rec.graph.cut_size(rec.partition))
            print(f"sample {i}: k={ks[-1]} defects={defect_counts[-1]} "
                  f"crossing={crossing_counts[-1]}")
    res = RunResult("sample-high", asdict(rc),
                    series={"diagnostics": {
                        "sample": list(range(ns["count"])), "k": ks,
                        "defect_edges": defect_counts,
                        "crossing_edges": crossing_counts,
                        "cut_size": cuts}},
                    graphs=graphs)
    return [res]


def _run_sample_defects(rc: RunConfig):
    ns = rc.params
    cfg = _high_config(argparse.Namespace(**ns))
    part = _representative_partition(ns["n"], ns["imbalance"])
    graphs = {}
    counts = []
    for i in range(ns["count"]):
        d = sample_defects(part, cfg, eps=ns["eps"],
                           seed=_derived_seed(rc.seed, "sample-defects", i))
        d.validate()
        graphs[f"defects{i:03d}"] = d.g
        counts.append(d.edge_count())
        print(f"sample {i}: {d.edge_count()} defect edges")
    res = RunResult("sample-defects", asdict(rc),
                    scalars={"edge_counts": counts}, graphs=graphs)
    return [res]


def _estimate_scalars(est) -> dict:
    return {"log_value": est.log_value, "value": est.value, "eps": est.eps,
            "delta": est.delta, "exact": est.exact,
            "certificate_valid": est.certificate_valid,
            "n_rungs": est.n_rungs, "n_samples": est.n_samples}


def _run_count(rc: RunConfig):
    ns = rc.params
    if ns["regime"] == "low":
        if ns["p"] is None:
            raise SystemExit("count --regime low needs --p")
        est = pipeline.count_low(ns["n"], float(ns["p"]), eps=ns["eps"],
                                 delta=ns["delta"], seed=rc.seed)
        label = f"count-low n={ns['n']} p={ns['p']}"
    else:
        if ns["lam"] is None:
            raise SystemExit("count --regime high needs --lam")
        cfg = _high_config(argparse.Namespace(**ns))
        est = pipeline.count_high(cfg, eps=ns["eps"], seed=rc.seed)
        label = f"count-high n={ns['n']} lam={ns['lam']}"
    print(f"{label}: log estimate {est.log_value!r} "
          f"(eps={est.eps!r}, delta={est.delta!r}, exact={est.exact})")
    res = RunResult(f"count-{ns['regime']}", asdict(rc),
                    scalars=_estimate_scalars(est))
    return [res]


def _run_mix_time(rc: RunConfig):
    ns = rc.params
    rep = experiments.run_mixing_experiment(
        ns["n"], float(ns["p"]), steps_grid=ns["grid"], n_chains=ns["chains"],
        n_pairs=ns["pairs"], max_steps=ns["max_steps"], mode=ns["mode"],
        calibrate=ns["calibrate"], seed=rc.seed, workers=rc.workers)
    series = {}
    scalars = {"mode": rep.mode, "n_chains": rep.n_chains}
    if rep.mode == "exact":
        series["tv"] = {"step": list(rep.steps), "tv": list(rep.tv),
                        "corrected_tv": list(rep.corrected_tv())}
        scalars["noise_floor"] = rep.noise_floor
        print(f"mix-time n={ns['n']} p={ns['p']}: final plug-in TV "
              f"{rep.tv[-1]!r} at step {rep.steps[-1]}")
    else:
        times = list(rep.coupling_times)
        series["coupling"] = {"pair": list(range(len(times))),
                              "coupling_steps": times}
        merged = sorted(t for t in times if t >= 0)
        scalars["coalesced_fraction"] = rep.coalesced_fraction()
        scalars["median_coupling_steps"] = (merged[len(merged) // 2]
                                            if merged else None)
        scalars["max_steps"] = rep.max_steps
        print(f"mix-time n={ns['n']} p={ns['p']}: "
              f"{scalars['coalesced_fraction']:.3f} of pairs coalesced "
              f"within {rep.max_steps} steps")
    res = RunResult("mix-time", asdict(rc), scalars=scalars, series=series)
    return [res]


def _run_slow_mix(rc: RunConfig):
    ns = rc.params
    result = experiments.run_slow_mix_demo(
        ns["n"], ns["density"], n_runs=ns["runs"], steps=ns["steps"],
        record_every=ns["record_every"], control_p=ns["control_p"],
        control_steps=ns["control_steps"], expander_pairs=ns["expander_pairs"],
        start=ns["start"], with_control=not ns["no_control"], seed=rc.seed)
    series = {}
    for r, tr in enumerate(result.traces):
        series[f"trace{r:02d}"] = {"step": list(tr.steps),
                                   "edges": list(tr.edges),
                                   "cut": list(tr.cut),
                                   "alignment": list(tr.alignment)}
    scalars = {
        "density": result.density, "activity": result.activity,
        "aligned_runs": result.aligned_runs,
        "n_runs": len(result.traces), "demo_ok": result.demo_ok,
        "alignment_threshold": result.alignment_threshold,
        "min_alignments": [tr.min_alignment for tr in result.traces],
        "flips": [tr.flips for tr in result.traces],
        "expanders_ok": all(e.is_expander for e in result.expanders),
        "min_cross_degree": min(e.min_cross_degree for e in result.expanders),
        "degree_threshold": result.expanders[0].degree_threshold,
        "pair_violations": sum(e.pair_violations for e in result.expanders),
        "pairs_checked": sum(e.pairs_checked for e in result.expanders),
    }
    for r, tr in enumerate(result.traces):
        print(f"run {r}: min alignment {tr.min_alignment:.4f}, "
              f"{tr.flips} flips")
    print(f"aligned runs {result.aligned_runs}/{len(result.traces)} "
          f"(threshold {result.alignment_threshold}), demo_ok={result.demo_ok}")
    if result.control is not None:
        c = result.control
        series["control"] = {"index": list(range(len(c.cut))),
                             "cut": list(c.cut)}
        scalars["control_p"] = c.p
        scalars["control_decorrelation_lag"] = c.decorrelation_lag
        scalars["control_decorrelated"] = c.decorrelated
        print(f"control p={c.p:.4f}: autocorrelation below {c.threshold} "
              f"at lag {c.decorrelation_lag} steps")
    res = RunResult("slow-mix", asdict(rc), scalars=scalars, series=series)
    return [res]


def _run_oracle(rc: RunConfig):
    ns = rc.params
    what = ns["what"]
    scalars: dict = {"what": what}
    series: dict = {}
    if what == "z":
        val = oracle.exact_Z(ns["n"], ns["lam"])
        scalars["value"] = float(val)
        scalars["value_exact"] = str(val)
        print(f"Z({ns['n']}, {ns['lam']}) = {val}")
    elif what == "conditioned":
        val = oracle.exact_conditioned_probability(ns["n"], ns["p"])
        scalars["value"] = float(val)
        scalars["value_exact"] = str(val)
        print(f"P(G({ns['n']},{ns['p']}) triangle-free) = {float(val)!r}")
    elif what == "mu":
        dist = oracle.exact_mu(ns["n"], ns["p"])
        series["distribution"] = {
            "state_encoding": list(dist.states),
            "probability": [float(q) for q in dist.probs]}
        scalars["support_size"] = len(dist.states)
        print(f"mu({ns['n']}, {ns['p']}): {len(dist.states)} states")
    elif what == "nu":
        part = _representative_partition(ns["n"], ns["imbalance"])
        dist = oracle.exact_nu(part, ns["lam"], ns["cap"])
        series["distribution"] = {
            "state_encoding": [repr((sorted(map(tuple, map(sorted, S))),
                                     sorted(map(tuple, map(sorted, T)))))
                               for S, T in dist.states],
            "probability": [float(q) for q in dist.probs]}
        scalars["support_size"] = len(dist.states)
        print(f"nu(n={ns['n']}, cap={ns['cap']}, lam={ns['lam']}): "
              f"{len(dist.states)} states")
    elif what == "defect-z":
        part = _representative_partition(ns["n"], ns["imbalance"])
        val = oracle.exact_defect_Z(part, ns["lam"], ns["cap"])
        scalars["value"] = float(val)
        scalars["value_exact"] = str(val)
        print(f"Zw(n={ns['n']}, cap={ns['cap']}, lam={ns['lam']}) = {float(val)!r}")
    elif what == "weak-count":
        total, per_k = oracle.exact_weak_count(ns["n"], ns["lam"], ns["cap"],
                                               ns["max_imbalance"])
        scalars["value"] = float(total)
        scalars["value_exact"] = str(total)
        scalars["per_imbalance"] = {str(k): float(z)
                                    for k, z in sorted(per_k.items())}
        print(f"weak count(n={ns['n']}, cap={ns['cap']}, lam={ns['lam']})"
              f" = {float(total)!r}")
    else:
        raise SystemExit(f"unknown oracle target {what!r}")
    res = RunResult("oracle", asdict(rc), scalars=scalars, series=series)
    return [res]


# ---------------------------------------------------------------------------
# selftest battery


def run_selftest(seed: int = 0, workers: int = 1):
    """Deterministic exercise of every module, sized for seconds not
    minutes. Returns RunResults whose emitted manifest is byte-identical
    across reruns with the same seed."""
    results = []

    z5 = oracle.exact_Z(5, Fraction(1, 4))
    cond = oracle.exact_conditioned_probability(6, Fraction(3, 20))
    weak, _ = oracle.exact_weak_count(8, Fraction(3, 10), 1)
    part6 = _representative_partition(6, 0)
    dz = oracle.exact_defect_Z(part6, Fraction(3, 10), 1)
    results.append(RunResult(
        "oracle-values", {"seed": seed},
        scalars={"z_n5_lam_1_4": str(z5),
                 "conditioned_n6_p_3_20": float(cond),
                 "weak_count_n8_cap1": float(weak),
                 "defect_z_n6_cap1": float(dz)}))

    host = Graph.from_edges(6, [(i, i + 1) for i in range(5)])
    lam = 1.0 / (2.0 * math.e * 5.0)
    ts = truncated_log_Z(host, lam, kmax=4)
    exact_log = math.log(float(oracle.exact_hardcore_Z(host, lam)))
    results.append(RunResult(
        "cluster-series", {"seed": seed, "kmax": 4, "lam": lam},
        scalars={"partial_sum": ts.partial, "tail_bound": ts.tail_bound,
                 "exact_log_z": exact_log,
                 "abs_error": abs(ts.partial - exact_log)}))

    graphs = {}
    counts = []
    for i in range(3):
        g = sample_low(6, 0.15, seed=_derived_seed(seed, "selftest-low", i))
        graphs[f"sample{i}"] = g
        counts.append(g.edge_count())
    rep = estimate_contraction(8, 0.05, trials=300,
                               seed=_derived_seed(seed, "selftest-contraction"))
    results.append(RunResult(
        "low-density", {"seed": seed, "n": 6, "p": 0.15, "trials": 300},
        scalars={"edge_counts": counts, "contraction_mean": rep.mean_distance,
                 "contraction_bound": rep.bound, "bound_valid": rep.bound_valid,
                 "contraction_ok": rep.ok},
        graphs=graphs))

    c5 = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)])
    est = hc_estimate_Z(c5, 0.2, eps=0.25, delta=0.2,
                        seed=_derived_seed(seed, "selftest-hc"))
    iset = hc_sample(c5, 0.2, seed=_derived_seed(seed, "selftest-hc-sample"))
    results.append(RunResult(
        "hardcore", {"seed": seed, "lam": 0.2},
        scalars={"log_z_estimate": est.log_value,
                 "exact_log_z": math.log(float(oracle.exact_hardcore_Z(c5, Fraction(1, 5)))),
                 "sample_size": len(iset)}))

    part8 = _representative_partition(8, 0)
    cfg8 = HighDensityConfig(n=8, lam=0.3, cap=1)
    hist: dict = {}
    for i in range(30):
        d = sample_defects(part8, cfg8,
                           seed=_derived_seed(seed, "selftest-defects", i))
        hist[d.edge_count()] = hist.get(d.edge_count(), 0) + 1
    zw = estimate_Zw(part8, cfg8, eps=0.1, delta=0.2,
                     seed=_derived_seed(seed, "selftest-zw"))
    results.append(RunResult(
        "defects", {"seed": seed, "n": 8, "cap": 1, "lam": 0.3},
        scalars={"edge_count_histogram": {str(k): v for k, v in sorted(hist.items())},
                 "zw_log_estimate": zw.log_value,
                 "zw_certificate_valid": zw.certificate_valid,
                 "zw_exact_log": math.log(float(oracle.exact_defect_Z(part8, Fraction(3, 10), 1)))}))

    low = pipeline.count_low(5, 0.1, eps=0.2,
                             seed=_derived_seed(seed, "selftest-count-low"))
    high = pipeline.count_high(HighDensityConfig(n=8, lam=0.3, cap=1,
                                                 mode="mcmc-ratio"),
                               eps=0.1,
                               seed=_derived_seed(seed, "selftest-count-high"))
    cfg40 = HighDensityConfig(n=40, lam=5.0 / math.sqrt(40))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rec = pipeline.sample_high(cfg40,
                                   seed=_derived_seed(seed, "selftest-high"))
    rec.validate()
    results.append(RunResult(
        "pipeline", {"seed": seed},
        scalars={"count_low_log": low.log_value,
                 "count_high_log": high.log_value,
                 "sample_high_edges": rec.graph.edge_count(),
                 "sample_high_cut": rec.graph.cut_size(rec.partition)}))

    mix = experiments.run_mixing_experiment(
        4, 0.2, n_chains=300, calibrate=True,
        seed=_derived_seed(seed, "selftest-mix"), workers=workers)
    results.append(RunResult(
        "mixing", {"seed": seed, "n": 4, "p": 0.2, "n_chains": 300},
        scalars={"noise_floor": mix.noise_floor, "final_tv": mix.tv[-1]},
        series={"tv": {"step": list(mix.steps), "tv": list(mix.tv)}}))

    demo = experiments.run_slow_mix_demo(
        30, 0.7, n_runs=2, steps=10 ** 5, control_steps=5 * 10 ** 4,
        expander_pairs=100, seed=_derived_seed(seed, "selftest-slowmix"))
    results.append(RunResult(
        "slow-mix", {"seed": seed, "n": 30, "density": 0.7, "runs": 2},
        scalars={"min_alignments": [t.min_alignment for t in demo.traces],
                 "aligned_runs": demo.aligned_runs,
                 "control_lag": demo.control.decorrelation_lag,
                 "expanders_ok": all(e.is_expander for e in demo.expanders)}))
    return results


def _run_selftest(rc: RunConfig):
    results = run_selftest(rc.seed, rc.workers)
    for res in results:
        res.config = {**res.config, "run": asdict(rc)}
        print(f"selftest [{res.name}] ok")
    return results


# ---------------------------------------------------------------------------
# parser


def build_parser():
    """Returns (parser, {subcommand: subparser}); the map serves config-file
    key validation."""
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=0,
                        help="master seed for all RNG streams")
    shared.add_argument("--out", default=None,
                        help=f"output directory (default: ${ENV_OUT_DIR})")
    shared.add_argument("--config", default=None,
                        help="KEY=VALUE file supplying flag defaults")
    shared.add_argument("--timing", action="store_true",
                        help="record wall-clock seconds in the manifest")
    shared.add_argument("--workers", type=int, default=1)

    parser = argparse.ArgumentParser(
        prog="trifree",
        description="Sample and count triangle-free graphs from conditioned "
                    "G(n,p), with exact small-n references.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sl = sub.add_parser("sample-low", parents=[shared],
                        help="Glauber sampler for the low-density regime")
    sl.add_argument("--n", type=int, required=True)
    sl.add_argument("--p", type=_number, required=True)
    sl.add_argument("--count", type=int, default=1)
    sl.add_argument("--eps", type=float, default=1e-3)
    sl.add_argument("--burn-const", type=float, default=DEFAULT_BURNIN_CONST)

    def add_high_flags(sp, need_cap=False):
        sp.add_argument("--n", type=int, required=True)
        sp.add_argument("--lam", type=_number, required=True)
        sp.add_argument("--cap", type=int, default=None, required=need_cap)
        sp.add_argument("--alpha", type=float, default=ALPHA_DEFAULT)
        sp.add_argument("--mode", default="cluster-ratio",
                        choices=["cluster-ratio", "mcmc-ratio"])
        sp.add_argument("--series-order", type=int, default=4)
        sp.add_argument("--max-imbalance", type=int, default=None)

    sh = sub.add_parser("sample-high", parents=[shared],
                        help="structured sampler for the high-density regime")
    add_high_flags(sh)
    sh.add_argument("--count", type=int, default=1)
    sh.add_argument("--eps", type=float, default=1e-2)

    sd = sub.add_parser("sample-defects", parents=[shared],
                        help="defect-graph sampler for one partition")
    add_high_flags(sd, need_cap=True)
    sd.add_argument("--imbalance", type=int, default=0)
    sd.add_argument("--count", type=int, default=1)
    sd.add_argument("--eps", type=float, default=1e-2)

    ct = sub.add_parser("count", parents=[shared],
                        help="approximate the triangle-freeness probability")
    ct.add_argument("--regime", required=True, choices=["low", "high"])
    ct.add_argument("--n", type=int, required=True)
    ct.add_argument("--p", type=_number, default=None)
    ct.add_argument("--lam", type=_number, default=None)
    ct.add_argument("--cap", type=int, default=None)
    ct.add_argument("--alpha", type=float, default=ALPHA_DEFAULT)
    ct.add_argument("--mode", default="cluster-ratio",
                    choices=["cluster-ratio", "mcmc-ratio"])
    ct.add_argument("--series-order", type=int, default=4)
    ct.add_argument("--max-imbalance", type=int, default=None)
    ct.add_argument("--eps", type=float, default=0.05)
    ct.add_argument("--delta", type=float, default=1.0 / 3.0)

    mt = sub.add_parser("mix-time", parents=[shared],
                        help="empirical mixing measurement")
    mt.add_argument("--n", type=int, required=True)
    mt.add_argument("--p", type=_number, required=True)
    mt.add_argument("--mode", default="auto",
                    choices=["auto", "exact", "coupling"])
    mt.add_argument("--chains", type=int, default=4000)
    mt.add_argument("--pairs", type=int, default=200)
    mt.add_argument("--grid", type=_steps_list, default=None,
                    help="comma-separated step grid")
    mt.add_argument("--max-steps", type=int, default=None)
    mt.add_argument("--calibrate", action="store_true",
                    help="also record the plug-in TV noise floor")

    sm = sub.add_parser("slow-mix", parents=[shared],
                        help="high-density bottleneck demonstration")
    sm.add_argument("--n", type=int, default=60)
    sm.add_argument("--density", type=float, default=None,
                    help="demo chain edge probability (default 5/sqrt(n))")
    sm.add_argument("--runs", type=int, default=10)
    sm.add_argument("--steps", type=int, default=experiments.SLOW_MIX_STEPS)
    sm.add_argument("--record-every", type=int, default=None)
    sm.add_argument("--control-p", type=float, default=None)
    sm.add_argument("--control-steps", type=int,
                    default=experiments.CONTROL_STEPS)
    sm.add_argument("--expander-pairs", type=int,
                    default=experiments.EXPANDER_PAIR_SAMPLES)
    sm.add_argument("--start", default="sample", choices=["sample", "empty"])
    sm.add_argument("--no-control", action="store_true")

    orc = sub.add_parser("oracle", parents=[shared],
                         help="exact small-n reference computations")
    orc.add_argument("--what", required=True,
                     choices=["z", "conditioned", "mu", "nu", "defect-z",
                              "weak-count"])
    orc.add_argument("--n", type=int, required=True)
    orc.add_argument("--p", type=_number, default=None)
    orc.add_argument("--lam", type=_number, default=None)
    orc.add_argument("--cap", type=int, default=None)
    orc.add_argument("--imbalance", type=int, default=0)
    orc.add_argument("--max-imbalance", type=int, default=None)

    st = sub.add_parser("selftest", parents=[shared],
                        help="deterministic battery exercising every module")
    return parser, {"sample-low": sl, "sample-high": sh, "sample-defects": sd,
                    "count": ct, "mix-time": mt, "slow-mix": sm, "oracle": orc,
                    "selftest": st}


_HANDLERS = {
    "sample-low": _run_sample_low,
    "sample-high": _run_sample_high,
    "sample-defects": _run_sample_defects,
    "count": _run_count,
    "mix-time": _run_mix_time,
    "slow-mix": _run_slow_mix,
    "oracle": _run_oracle,
    "selftest": _run_selftest,
}

_SHARED_DESTS = ("seed", "out", "config", "timing", "workers", "subcommand")


def main(argv=None) -> int:
    parser, submap = build_parser()
    ns = parser.parse_args(argv)
    try:
        if ns.config is not None:
            apply_config_file(ns, parse_config_file(ns.config),
                              submap[ns.subcommand]._actions)
        out_dir = ns.out if ns.out is not None else os.environ.get(ENV_OUT_DIR)
        params = {k: v for k, v in vars(ns).items() if k not in _SHARED_DESTS}
        rc = RunConfig(ns.subcommand, params, ns.seed, out_dir, ns.timing,
                       ns.workers)
        t0 = time.perf_counter()
        results = _HANDLERS[ns.subcommand](rc)
        elapsed = time.perf_counter() - t0
        for res in results:
            res.scalars.setdefault("wall_time", elapsed if rc.timing else None)
        if out_dir is not None:
            mpath = emit_results(results, out_dir)
            print(f"wrote {mpath}")
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
