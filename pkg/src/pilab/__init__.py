"""Exact policy-iteration laboratory."""

from .constructions.counter import build_full, build_reachability, build_robust, build_simple
from .constructions.mc import build_mc_basic, build_mc_difference, build_mc_topological
from .families import build, make_variant
from .mdp import (
    TOTAL_REWARD,
    Action,
    ImproperPolicy,
    Mdp,
    MdpBuilder,
    Reachability,
    appeal,
    compute_values,
    switchable_set,
)
from .policy_iteration import Difference, Greedy, Hybrid, Simple, Topological, Trace, run

__all__ = [
    "TOTAL_REWARD",
    "Action",
    "Difference",
    "Greedy",
    "Hybrid",
    "ImproperPolicy",
    "Mdp",
    "MdpBuilder",
    "Reachability",
    "Simple",
    "Topological",
    "Trace",
    "appeal",
    "build",
    "build_full",
    "build_mc_basic",
    "build_mc_difference",
    "build_mc_topological",
    "build_reachability",
    "build_robust",
    "build_simple",
    "compute_values",
    "make_variant",
    "run",
    "switchable_set",
]
