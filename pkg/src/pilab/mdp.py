"""MDP data model, policy evaluation, appeal and switchability."""

from __future__ import annotations

import json
from collections import deque
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from typing import Literal, Union

from gmpy2 import mpq

from .linalg import solve_system
from .rational import ONE, ZERO, RationalLike, format_q, parse_q

Direction = Literal["max", "min"]
Policy = dict[int, int]
ValueVector = dict[int, "mpq"]


class ImproperPolicy(ValueError):
    """A policy under which some state does not reach a sink almost surely."""

    def __init__(self, states: Iterable[int]):
        self.states = sorted(states)
        super().__init__(f"policy is improper at states {self.states[:10]}")


@dataclass(frozen=True)
class TotalReward:
    pass


@dataclass(frozen=True)
class Reachability:
    target: int


Criterion = Union[TotalReward, Reachability]
TOTAL_REWARD = TotalReward()


@dataclass(frozen=True)
class Action:
    id: int
    reward: mpq
    transitions: tuple[tuple[int, mpq], ...]
    label: str = ""


@dataclass(frozen=True, eq=True)
class Mdp:
    names: tuple[str, ...]
    actions: tuple[tuple[Action, ...], ...]
    sinks: frozenset[int]
    roles: Mapping[int, str] = field(default_factory=dict)
    direction: Direction = "max"
    criterion: Criterion = TOTAL_REWARD

    @property
    def num_states(self) -> int:
        return len(self.names)

    def states(self) -> range:
        return range(len(self.names))

    def non_sinks(self) -> list[int]:
        return [s for s in self.states() if s not in self.sinks]

    def action(self, s: int, a: int) -> Action:
        try:
            return self.actions[s][a]
        except IndexError:
            raise KeyError(f"no action {a} at state {s}") from None

    def index(self) -> dict[str, int]:
        return {name: s for s, name in enumerate(self.names)}

    def better(self, x: mpq, y: mpq) -> bool:
        """True when ``x`` is strictly better than ``y`` in this instance's direction."""
        return x > y if self.direction == "max" else x < y

    def num_actions(self) -> int:
        return sum(len(acts) for acts in self.actions)


class MdpBuilder:
    """Incremental construction of an :class:`Mdp` with named states."""

    def __init__(self) -> None:
        self.names: list[str] = []
        self.actions: list[list[Action]] = []
        self.sinks: set[int] = set()
        self.roles: dict[int, str] = {}
        self._ids: dict[str, int] = {}

    def add_state(self, name: str, role: str | None = None, sink: bool = False) -> int:
        if name in self._ids:
            raise ValueError(f"duplicate state name {name!r}")
        s = len(self.names)
        self.names.append(name)
        self.actions.append([])
        self._ids[name] = s
        if role is not None:
            self.roles[s] = role
        if sink:
            self.sinks.add(s)
        return s

    def __getitem__(self, name: str) -> int:
        return self._ids[name]

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def add_action(
        self,
        s: int,
        transitions: Mapping[int, RationalLike] | Iterable[tuple[int, RationalLike]] | int,
        reward: RationalLike = 0,
        label: str | None = None,
    ) -> int:
        """Add an action to ``s``; an int ``transitions`` means a deterministic edge."""
        if isinstance(transitions, int):
            pairs = [(transitions, ONE)]
        elif isinstance(transitions, Mapping):
            pairs = [(t, mpq(p)) for t, p in transitions.items()]
        else:
            pairs = [(t, mpq(p)) for t, p in transitions]
        a = len(self.actions[s])
        self.actions[s].append(
            Action(a, mpq(reward), tuple(pairs), str(a) if label is None else label)
        )
        return a

    def build(self, direction: Direction = "max", criterion: Criterion = TOTAL_REWARD) -> Mdp:
        return Mdp(
            names=tuple(self.names),
            actions=tuple(tuple(acts) for acts in self.actions),
            sinks=frozenset(self.sinks),
            roles=dict(self.roles),
            direction=direction,
            criterion=criterion,
        )


@dataclass(frozen=True)
class Violation:
    rule: str
    state: int
    action: int | None
    detail: str


def validate(mdp: Mdp) -> list[Violation]:
    out: list[Violation] = []
    n = mdp.num_states
    if len(mdp.actions) != n:
        out.append(Violation("shape", -1, None, "actions list length differs from states"))
        return out
    for s in mdp.sinks:
        if not 0 <= s < n:
            out.append(Violation("sink-exists", s, None, "sink id out of range"))
    for s in range(n):
        acts = mdp.actions[s]
        if s in mdp.sinks:
            if acts:
                out.append(Violation("sink-action", s, None, "sink has actions"))
            continue
        if not acts:
            out.append(Violation("no-action", s, None, "non-sink state without actions"))
        for pos, act in enumerate(acts):
            if act.id != pos:
                out.append(Violation("action-id", s, act.id, f"id {act.id} at position {pos}"))
            if not act.transitions:
                out.append(Violation("empty-transitions", s, act.id, "no transitions"))
                continue
            seen: set[int] = set()
            total = ZERO
            for t, p in act.transitions:
                if not 0 <= t < n:
                    out.append(Violation("target-exists", s, act.id, f"target {t} out of range"))
                if t in seen:
                    out.append(Violation("duplicate-target", s, act.id, f"target {t} repeated"))
                seen.add(t)
                if p <= 0:
                    out.append(Violation("probability-positive", s, act.id, f"p={p} to {t}"))
                total += p
            if total != 1:
                out.append(Violation("probability-sum", s, act.id, f"sum={total}"))
    crit = mdp.criterion
    if isinstance(crit, Reachability) and crit.target not in mdp.sinks:
        out.append(Violation("target-sink", crit.target, None, "reachability target is not a sink"))
    return out


def _chosen(mdp: Mdp, policy: Mapping[int, int], s: int) -> Action:
    acts = mdp.actions[s]
    a = policy.get(s)
    if a is None:
        if len(acts) == 1:
            return acts[0]
        raise KeyError(f"policy does not cover state {s}")
    if not 0 <= a < len(acts):
        raise KeyError(f"no action {a} at state {s}")
    return acts[a]


def _reaching(mdp: Mdp, policy: Mapping[int, int], goals: Iterable[int]) -> set[int]:
    """States that reach ``goals`` in the policy subgraph."""
    preds: dict[int, list[int]] = {}
    for s in mdp.non_sinks():
        for t, _ in _chosen(mdp, policy, s).transitions:
            preds.setdefault(t, []).append(s)
    seen = set(goals)
    queue = deque(seen)
    while queue:
        t = queue.popleft()
        for s in preds.get(t, ()):
            if s not in seen:
                seen.add(s)
                queue.append(s)
    return seen


def compute_values(
    mdp: Mdp, policy: Mapping[int, int], criterion: Criterion | None = None
) -> ValueVector:
    """Exact values of ``policy``; single-action states may be omitted from it."""
    crit = mdp.criterion if criterion is None else criterion
    values: ValueVector = {s: ZERO for s in mdp.sinks}
    rows = {}
    if isinstance(crit, Reachability):
        if crit.target not in mdp.sinks:
            raise ValueError("reachability target must be a sink")
        live = _reaching(mdp, policy, [crit.target]) - mdp.sinks
        values[crit.target] = ONE
        for s in mdp.non_sinks():
            if s not in live:
                values[s] = ZERO
        for s in live:
            act = _chosen(mdp, policy, s)
            rows[s] = (ZERO, {t: p for t, p in act.transitions})
    else:
        proper = _reaching(mdp, policy, mdp.sinks)
        bad = [s for s in mdp.non_sinks() if s not in proper]
        if bad:
            raise ImproperPolicy(bad)
        for s in mdp.non_sinks():
            act = _chosen(mdp, policy, s)
            rows[s] = (act.reward, {t: p for t, p in act.transitions})
    values.update(solve_system(rows, values))
    return values


def appeal(mdp: Mdp, values: Mapping[int, mpq], s: int, a: int, criterion: Criterion | None = None) -> mpq:
    """One-step lookahead value of action ``a`` at ``s`` against ``values``."""
    crit = mdp.criterion if criterion is None else criterion
    act = mdp.action(s, a)
    total = ZERO if isinstance(crit, Reachability) else act.reward
    for t, p in act.transitions:
        total += p * values[t]
    return total


def switchable_set(
    mdp: Mdp, policy: Mapping[int, int], values: Mapping[int, mpq], criterion: Criterion | None = None
) -> dict[int, list[tuple[int, mpq]]]:
    """Map each switchable state to its improving actions, best first."""
    out: dict[int, list[tuple[int, mpq]]] = {}
    sign = 1 if mdp.direction == "max" else -1
    for s in mdp.non_sinks():
        cur = values[s]
        better = []
        for act in mdp.actions[s]:
            val = appeal(mdp, values, s, act.id, criterion)
            if mdp.better(val, cur):
                better.append((act.id, val))
        if better:
            better.sort(key=lambda item: (-sign * item[1], item[0]))
            out[s] = better
    return out


def reachability_as_total_reward(mdp: Mdp, target: int) -> Mdp:
    """Reward each action by its probability of stepping into ``target``."""
    if target not in mdp.sinks:
        raise ValueError("reachability target must be a sink")
    actions = []
    for acts in mdp.actions:
        new = []
        for act in acts:
            reward = sum((p for t, p in act.transitions if t == target), ZERO)
            new.append(Action(act.id, reward, act.transitions, act.label))
        actions.append(tuple(new))
    return Mdp(mdp.names, tuple(actions), mdp.sinks, dict(mdp.roles), mdp.direction, TOTAL_REWARD)


def with_criterion(mdp: Mdp, criterion: Criterion) -> Mdp:
    return Mdp(mdp.names, mdp.actions, mdp.sinks, mdp.roles, mdp.direction, criterion)


# --- JSON -----------------------------------------------------------------


def mdp_to_dict(mdp: Mdp) -> dict:
    crit = mdp.criterion
    return {
        "direction": mdp.direction,
        "criterion": (
            {"kind": "reachability", "target": crit.target}
            if isinstance(crit, Reachability)
            else {"kind": "total-reward"}
        ),
        "states": [
            {
                "name": mdp.names[s],
                "actions": [
                    {
                        "label": act.label,
                        "reward": format_q(act.reward),
                        "transitions": [[t, format_q(p)] for t, p in act.transitions],
                    }
                    for act in mdp.actions[s]
                ],
            }
            for s in mdp.states()
        ],
        "sinks": {str(s): True for s in sorted(mdp.sinks)},
        "roles": {str(s): role for s, role in sorted(mdp.roles.items())},
    }


def mdp_from_dict(data: dict) -> Mdp:
    names, actions = [], []
    for st in data["states"]:
        names.append(st["name"])
        actions.append(
            tuple(
                Action(
                    a,
                    parse_q(act["reward"]),
                    tuple((int(t), parse_q(p)) for t, p in act["transitions"]),
                    act.get("label", str(a)),
                )
                for a, act in enumerate(st["actions"])
            )
        )
    crit_data = data.get("criterion", {"kind": "total-reward"})
    crit: Criterion = (
        Reachability(int(crit_data["target"]))
        if crit_data["kind"] == "reachability"
        else TOTAL_REWARD
    )
    return Mdp(
        names=tuple(names),
        actions=tuple(actions),
        sinks=frozenset(int(s) for s, flag in data.get("sinks", {}).items() if flag),
        roles={int(s): r for s, r in data.get("roles", {}).items()},
        direction=data.get("direction", "max"),
        criterion=crit,
    )


def dumps_mdp(mdp: Mdp) -> str:
    return json.dumps(mdp_to_dict(mdp), indent=1, sort_keys=True)


def loads_mdp(text: str) -> Mdp:
    return mdp_from_dict(json.loads(text))
