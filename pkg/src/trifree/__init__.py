"""Sampling and approximate counting for triangle-free graphs.

The measure of interest is G(n,p) conditioned on containing no triangle,
equivalently weight lam^{|E(G)|} with lam = p/(1-p) over triangle-free G.
Low densities are handled by conditioned edge-update dynamics; high densities
by a structured pipeline (bipartition, defect edges, crossing edges from a
hard-core model on a product graph). Exact small-size oracles back every
stochastic component.
"""

from .graph import Graph, Partition, ProductGraphView, edge_index, edge_from_index
from .oracle import (ExactDistribution, exact_Z, exact_mu, exact_hardcore_Z,
                     exact_nu, tv_distance)
from .glauber import LowDensityConfig, sample_low, estimate_contraction
from .defect import HighDensityConfig, DefectState, sample_defects, estimate_Zw
from .pipeline import sample_high, count_low, count_high, build_imbalance_table
from .hardcore import hc_sample, hc_estimate_Z

__all__ = [
    "Graph", "Partition", "ProductGraphView", "edge_index", "edge_from_index",
    "ExactDistribution", "exact_Z", "exact_mu", "exact_hardcore_Z", "exact_nu",
    "tv_distance",
    "LowDensityConfig", "sample_low", "estimate_contraction",
    "HighDensityConfig", "DefectState", "sample_defects", "estimate_Zw",
    "sample_high", "count_low", "count_high", "build_imbalance_table",
    "hc_sample", "hc_estimate_Z",
]
