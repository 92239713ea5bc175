"""Deterministic simulator for distributed strongly convex optimisation.

Modules: ``topology`` (graphs, consensus matrices, mixing bounds),
``feasible_set``, ``objectives`` (losses, streams, noise), ``serial_opt``
(lazy projection and reference optima), ``dogd``, ``dda``, ``metrics``,
``harness`` (configs, presets, sweeps), ``verify`` and ``cli``.
"""

from .dda import dda_run, dda_step
from .dogd import dogd_run, dogd_step, make_schedule, round_boundary
from .estimators import DDAClassifier, DOGDClassifier
from .feasible_set import Box, L2Ball, Unconstrained
from .harness import ExperimentConfig, preset, run_experiment, sweep
from .metrics import distributed_regret, gap_at, gap_series, network_error, rate_slope
from .objectives import ObjectiveSpec, StreamSet
from .topology import build_graph, metropolis_weights

__version__ = "0.1.0"

__all__ = [
    "Box", "DDAClassifier", "DOGDClassifier", "ExperimentConfig", "L2Ball", "ObjectiveSpec",
    "StreamSet", "Unconstrained", "build_graph", "dda_run", "dda_step", "distributed_regret",
    "dogd_run", "dogd_step", "gap_at", "gap_series", "make_schedule", "metropolis_weights",
    "network_error", "preset", "rate_slope", "round_boundary", "run_experiment", "sweep",
]
