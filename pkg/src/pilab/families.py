"""Name-based access to every instance family."""

from __future__ import annotations

import dataclasses

from .constructions.built import BuiltMdp
from .constructions.counter import build_full, build_reachability, build_robust, build_simple
from .constructions.mc import build_mc_basic, build_mc_difference, build_mc_topological, read_probabilities
from .perturbation import PerturbationSpec, perturb
from .policy_iteration import Difference, Greedy, Hybrid, Simple, Topological, Variant

FAMILIES = ("simple", "full", "robust", "reachability", "mc-basic", "mc-topological", "mc-difference")
VARIANTS = ("greedy", "hybrid", "simple", "topological", "difference")

DEFAULT_VARIANT = {
    "simple": "hybrid",
    "full": "greedy",
    "robust": "greedy",
    "reachability": "greedy",
    "mc-basic": "simple",
    "mc-topological": "topological",
    "mc-difference": "difference",
}

MIN_N = {"simple": 1, "full": 1, "robust": 2, "reachability": 2, "mc-basic": 1, "mc-topological": 1, "mc-difference": 2}


def build(family: str, n: int, **kwargs) -> BuiltMdp:
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    if n < MIN_N[family]:
        raise ValueError(f"{family} needs n >= {MIN_N[family]}")
    if family == "simple":
        return build_simple(n)
    if family == "full":
        return build_full(n, **kwargs)
    if family == "robust":
        return build_robust(n)
    if family == "reachability":
        return build_reachability(n)
    if family == "mc-basic":
        return build_mc_basic(n, **kwargs)
    if family == "mc-topological":
        return build_mc_topological(n, **kwargs)
    return build_mc_difference(n, **kwargs)


def make_variant(name: str, built: BuiltMdp) -> Variant:
    if name == "greedy":
        return Greedy()
    if name == "hybrid":
        if built.family != "simple":
            raise ValueError("hybrid PI is defined for the simple construction only")
        return Hybrid(built.bit_states)
    if name == "simple":
        return Simple()
    if name == "topological":
        return Topological()
    if name == "difference":
        return Difference()
    raise ValueError(f"unknown variant {name!r}")


def perturb_built(built: BuiltMdp, spec: PerturbationSpec) -> BuiltMdp:
    """Perturbed copy of an instance.

    On the two-action graphs the cost of entering 1* is folded into action
    rewards as cost times probability, so only the probabilities are taken
    from the perturbed MDP and the graph is rebuilt around them.
    """
    mdp = perturb(built.mdp, spec)
    if built.topology != "mc":
        return dataclasses.replace(built, mdp=mdp)
    return build(built.family, built.n, **read_probabilities(built, mdp))
