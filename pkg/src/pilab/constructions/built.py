"""Common result type for the instance generators."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

from ..mdp import Mdp, Policy


@dataclass(frozen=True)
class GadgetRecord:
    """Where a gadget sits inside a built MDP.

    ``kind`` is one of g1, g2, g2-prob, g3, g4, g5. ``entry`` is the state
    whose action enters the gadget and ``exit`` the state it leads to.
    ``fallback`` is the state that failed traversals return to (g1, g2-prob).
    ``nodes`` lists the gadget's own single-action states.
    """

    kind: str
    param: str
    entry: int
    exit: int
    nodes: tuple[int, ...]
    fallback: int | None = None
    action: int | None = None


@dataclass(frozen=True)
class BuiltMdp:
    family: str
    n: int
    mdp: Mdp
    start_policy: Policy
    bit_states: tuple[int, ...]
    params: Any = None
    gadgets: tuple[GadgetRecord, ...] = ()
    info: dict = field(default_factory=dict)

    @property
    def num_states(self) -> int:
        return self.mdp.num_states

    @property
    def default_max_iters(self) -> int:
        return 2 ** (self.n + 4)

    @cached_property
    def ids(self) -> dict[str, int]:
        return self.mdp.index()

    def state(self, name: str) -> int:
        return self.ids[name]

    @property
    def topology(self) -> str:
        """``simple`` or ``full`` for the counter families, ``mc`` otherwise."""
        if self.family == "simple":
            return "simple"
        if self.family in ("full", "robust", "reachability"):
            return "full"
        return "mc"
