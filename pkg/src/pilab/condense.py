"""Exact elimination of single-action states.

A state with one action has no choice to make, so its value is a fixed
affine function of its successors. Substituting those functions away leaves
an equivalent MDP on the decision states whose actions may carry self-loops.
Each remaining action is stored in escape-normalized form: with ``esc`` the
probability of leaving the state, the action behaves like "pay ``reward``
and move by ``succ``" conditioned on leaving. Under any policy the decision
state values agree with the original MDP, and for every action

    appeal(s, a) - Val(s) = esc * (reward + sum succ * Val - Val(s)),

so policy iteration on the condensed model makes identical decisions while
keeping the huge gadget probabilities out of the per-iteration arithmetic.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from gmpy2 import mpq

from .linalg import SingularSystem, back_substitute, compress_chains, eliminate
from .mdp import Criterion, ImproperPolicy, Mdp, Reachability, ValueVector, reachability_as_total_reward
from .rational import ONE, ZERO


@dataclass(frozen=True)
class NormalAction:
    id: int
    esc: mpq
    reward: mpq
    succ: tuple[tuple[int, mpq], ...]
    label: str


@dataclass(frozen=True)
class CondensedModel:
    source: Mdp
    criterion: Criterion
    decisions: tuple[int, ...]
    actions: dict[int, tuple[NormalAction, ...]]
    record: tuple
    trapped: frozenset[int]

    @property
    def direction(self) -> str:
        return self.source.direction

    @property
    def least_fixed_point(self) -> bool:
        """Reachability semantics: states that cannot collect reward get 0."""
        return isinstance(self.criterion, Reachability)

    def expand(self, values: dict[int, mpq]) -> ValueVector:
        """Values for every state given values on the decision states."""
        full: dict[int, mpq] = {s: ZERO for s in self.source.sinks}
        for s in self.trapped:
            full[s] = ZERO
        full.update(values)
        back_substitute(list(self.record), full)
        if isinstance(self.criterion, Reachability):
            full[self.criterion.target] = ONE
        return dict(sorted(full.items()))


def _trapped_states(mdp: Mdp, single: set[int]) -> set[int]:
    """Single-action states that can never leave the single-action region."""
    preds: dict[int, list[int]] = {}
    exits = []
    for s in single:
        for t, _ in mdp.actions[s][0].transitions:
            if t in single:
                preds.setdefault(t, []).append(s)
            else:
                exits.append(s)
    free = set(exits)
    queue = deque(exits)
    while queue:
        t = queue.popleft()
        for s in preds.get(t, ()):
            if s not in free:
                free.add(s)
                queue.append(s)
    return single - free


def condense(mdp: Mdp, criterion: Criterion | None = None) -> CondensedModel:
    crit = mdp.criterion if criterion is None else criterion
    work = mdp
    if isinstance(crit, Reachability):
        work = reachability_as_total_reward(mdp, crit.target)
    single = {s for s in work.non_sinks() if len(work.actions[s]) == 1}
    trapped = _trapped_states(work, single)
    if trapped:
        if not isinstance(crit, Reachability):
            raise ImproperPolicy(trapped)
        if any(work.actions[s][0].reward for s in trapped):
            raise ImproperPolicy(trapped)
    constant = work.sinks | trapped
    rows: dict[tuple[int, int], list] = {}
    for s in work.non_sinks():
        if s in trapped:
            continue
        for act in work.actions[s]:
            coefs: dict[int, mpq] = {}
            for t, p in act.transitions:
                if t not in constant:
                    coefs[t] = coefs.get(t, ZERO) + p
            rows[(s, act.id)] = [act.reward, coefs]
    definitions = {s: (s, 0) for s in sorted(single - trapped)}
    try:
        record = compress_chains(rows, definitions)
        record += eliminate(rows, definitions)
    except SingularSystem as exc:
        raise ImproperPolicy(single) from exc
    decisions = tuple(s for s in work.non_sinks() if len(work.actions[s]) > 1)
    actions: dict[int, tuple[NormalAction, ...]] = {}
    for s in decisions:
        normal = []
        for act in work.actions[s]:
            reward, coefs = rows[(s, act.id)]
            loop = coefs.pop(s, ZERO)
            esc = ONE - loop
            if esc == 0:
                normal.append(NormalAction(act.id, esc, reward, (), act.label))
                continue
            if esc != 1:
                reward = reward / esc
                coefs = {t: w / esc for t, w in coefs.items()}
            normal.append(NormalAction(act.id, esc, reward, tuple(sorted(coefs.items())), act.label))
        actions[s] = tuple(normal)
    return CondensedModel(work, crit, decisions, actions, tuple(record), frozenset(trapped))
