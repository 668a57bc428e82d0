"""Bayesian block-model clustering of directed acyclic graphs.

Nodes carry a latent topological ordering, a group label from a
Pitman-Yor partition prior (finite or infinite regime) and a degree
correction; block rates are integrated out under a Gamma prior.
"""
from .graph import (
    CyclicError,
    Dag,
    GraphError,
    RawDigraph,
    break_cycles,
    check_topological,
    kahn_sort,
    largest_weak_component,
    parse_edge_list,
    read_edge_list,
)
from .likelihood import GammaHyper, PriorConfig, PyParams, log_eppf, log_lik_collapsed, log_lik_full
from .posterior import expected_vi, ordering_density, salso_estimate, similarity_matrix, vi_distance
from .sampler import TraceRecord, TuningConfig, iter_chain, run_chain
from .selection import PseudoPrior, bayes_factor, fit_pseudopriors, regime_gibbs_step
from .state import AllocationState, BlockCounts, ChainState, OrderingState, block_counts
from .synth import Truth, generate_dag, generate_planted

__version__ = "0.1.0"
