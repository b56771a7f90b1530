"""Policy iteration variants and the iteration driver."""

from __future__ import annotations

from collections import deque
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Union

from gmpy2 import mpq

from .condense import CondensedModel, condense
from .linalg import SingularSystem, solve_system, strongly_connected_components
from .mdp import Criterion, ImproperPolicy, Mdp, Policy, ValueVector
from .rational import ZERO


@dataclass(frozen=True)
class Greedy:
    pass


@dataclass(frozen=True)
class Hybrid:
    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.bits:
            raise ValueError("hybrid PI needs at least one bit state")


@dataclass(frozen=True)
class Simple:
    order: tuple[int, ...] | None = None


@dataclass(frozen=True)
class Topological:
    order: Mapping[int, int] | None = None


@dataclass(frozen=True)
class Difference:
    pass


Variant = Union[Greedy, Hybrid, Simple, Topological, Difference]

Switch = tuple[int, int, int]


class NonMonotoneStep(AssertionError):
    pass


@dataclass
class IterationRecord:
    policy_before: Policy
    switches: tuple[Switch, ...]
    values_before: ValueVector | None = None


@dataclass
class Trace:
    """Outcome of :func:`run`. Policies cover decision states only."""

    start_policy: Policy
    switch_sets: list[tuple[Switch, ...]]
    terminal_policy: Policy
    termination: str
    terminal_values: ValueVector
    value_snapshots: list[ValueVector] | None = None
    model: CondensedModel | None = field(default=None, repr=False)

    @property
    def iteration_count(self) -> int:
        return len(self.switch_sets)

    @property
    def optimal(self) -> bool:
        return self.termination == "optimal"

    def policies(self) -> Iterator[Policy]:
        """Policy before each iteration, then the terminal policy."""
        pol = dict(self.start_policy)
        yield dict(pol)
        for switches in self.switch_sets:
            for s, _, new in switches:
                pol[s] = new
            yield dict(pol)

    @property
    def iterations(self) -> list[IterationRecord]:
        snaps = self.value_snapshots
        return [
            IterationRecord(pol, sw, snaps[k] if snaps else None)
            for k, (pol, sw) in enumerate(zip(self.policies(), self.switch_sets))
        ]

    def full_terminal_values(self) -> ValueVector:
        assert self.model is not None
        return self.model.expand(self.terminal_values)


def topological_order(mdp: Mdp) -> dict[int, int]:
    """Component index per state; sinks low, and reachability never decreases it.

    Computed from the static graph of all actions.
    """

    def succ(s: int):
        for act in mdp.actions[s]:
            for t, _ in act.transitions:
                yield t

    comps = strongly_connected_components(mdp.states(), succ)
    return {s: k for k, comp in enumerate(comps) for s in comp}


class Evaluator:
    """Incrementally maintained values and best improvements for one run."""

    def __init__(self, model: CondensedModel, policy: Mapping[int, int], check_monotone: bool = True):
        self.model = model
        self.acts = model.actions
        self.sign = 1 if model.direction == "max" else -1
        self.check_monotone = check_monotone
        self.policy: dict[int, int] = {}
        for s in model.decisions:
            a = policy[s]
            if not 0 <= a < len(self.acts[s]):
                raise KeyError(f"no action {a} at state {s}")
            self.policy[s] = a
        self.refs: dict[int, set[int]] = {s: set() for s in model.decisions}
        for s in model.decisions:
            for act in self.acts[s]:
                for t, _ in act.succ:
                    self.refs[t].add(s)
        self.preds: dict[int, set[int]] = {s: set() for s in model.decisions}
        for s, a in self.policy.items():
            for t, _ in self.acts[s][a].succ:
                self.preds[t].add(s)
        # per state and action: (reward, successor map) or None for a pure self-loop
        self.rows = {
            s: [None if act.esc == 0 else (act.reward, dict(act.succ)) for act in self.acts[s]]
            for s in model.decisions
        }
        self.values: dict[int, mpq] = {}
        self._solve(set(model.decisions))
        self.gains: dict[int, tuple[mpq, int]] = {}
        for s in model.decisions:
            self._refresh_gain(s)

    # values -------------------------------------------------------------

    def _solve(self, region: set[int]) -> None:
        if self.model.least_fixed_point:
            self._solve_lfp(region)
            return
        pol, rows = self.policy, self.rows
        system = {}
        for v in region:
            row = rows[v][pol[v]]
            if row is None:
                raise ImproperPolicy([v])
            system[v] = row
        try:
            self.values.update(solve_system(system, self.values))
        except SingularSystem:
            # a closed class without exit makes the system singular
            raise ImproperPolicy(region) from None

    def _solve_lfp(self, region: set[int]) -> None:
        """Least fixed point: states unable to collect reward are pinned at 0."""
        pol, rows, values = self.policy, self.rows, self.values
        internal: dict[int, list[int]] = {v: [] for v in region}
        seeds = []
        for v in region:
            row = rows[v][pol[v]]
            if row is None:
                if self.acts[v][pol[v]].reward:
                    raise ImproperPolicy([v])
                continue
            reward, succ = row
            seed = bool(reward)
            for t in succ:
                if t in region:
                    internal[t].append(v)
                elif values[t] != 0:
                    seed = True
            if seed:
                seeds.append(v)
        live = set(seeds)
        queue = deque(seeds)
        while queue:
            t = queue.popleft()
            for v in internal[t]:
                if v not in live:
                    live.add(v)
                    queue.append(v)
        for v in region - live:
            values[v] = ZERO
        values.update(solve_system({v: rows[v][pol[v]] for v in live}, values))

    def _ancestors(self, starts) -> set[int]:
        seen = set(starts)
        queue = deque(seen)
        preds = self.preds
        while queue:
            t = queue.popleft()
            for v in preds[t]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return seen

    # improvements ---------------------------------------------------------

    def improvement(self, s: int, act) -> mpq:
        """``appeal(s, act) - Val(s)`` (unsigned, exact)."""
        values = self.values
        if act.esc == 0:
            return act.reward
        total = act.reward - values[s]
        for t, p in act.succ:
            total += p * values[t]
        return total if act.esc == 1 else act.esc * total

    def _refresh_gain(self, s: int) -> None:
        best = None
        cur = self.policy[s]
        sign = self.sign
        for act in self.acts[s]:
            if act.id == cur:
                continue
            g = self.improvement(s, act)
            if sign < 0:
                g = -g
            if g > 0 and (best is None or g > best[0]):
                best = (g, act.id)
        if best is None:
            self.gains.pop(s, None)
        else:
            self.gains[s] = best

    # switching ------------------------------------------------------------

    def switch(self, changes: Mapping[int, int]) -> None:
        acts, preds = self.acts, self.preds
        for s, a in changes.items():
            for t, _ in acts[s][self.policy[s]].succ:
                preds[t].discard(s)
            self.policy[s] = a
            for t, _ in acts[s][a].succ:
                preds[t].add(s)
        region = self._ancestors(changes)
        old = {v: self.values[v] for v in region} if self.check_monotone else None
        self._solve(region)
        if old is not None:
            sign = self.sign
            strict = False
            for v in region:
                diff = (self.values[v] - old[v]) * sign
                if diff < 0:
                    raise NonMonotoneStep(f"value of state {v} got worse")
                strict = strict or diff > 0
            if not strict:
                raise NonMonotoneStep("no state improved")
        affected = set(region)
        for t in region:
            affected |= self.refs[t]
        for s in affected:
            self._refresh_gain(s)


# selection rules -------------------------------------------------------------


def _select(variant: Variant, ev: Evaluator, mdp: Mdp, ranks: Mapping[int, int] | None) -> dict[int, int]:
    gains = ev.gains
    if isinstance(variant, Greedy):
        return {s: a for s, (_, a) in gains.items()}
    if isinstance(variant, Simple):
        s = max(gains, key=ranks.__getitem__) if ranks is not None else max(gains)
        return {s: gains[s][1]}
    if isinstance(variant, Topological):
        s = min(gains, key=lambda v: (ranks[v], -v))
        return {s: gains[s][1]}
    if isinstance(variant, Difference):
        s = max(gains, key=lambda v: (gains[v][0], v))
        return {s: gains[s][1]}
    if isinstance(variant, Hybrid):
        return _hybrid(variant.bits, ev, mdp)
    raise TypeError(f"unknown variant {variant!r}")


def _is_one(mdp: Mdp, s: int, a: int) -> bool:
    return mdp.actions[s][a].label == "1"


def _hybrid(bits: Sequence[int], ev: Evaluator, mdp: Mdp) -> dict[int, int]:
    gains, pol = ev.gains, ev.policy
    bit_set = set(bits)
    out = {s: a for s, (_, a) in gains.items() if s not in bit_set}
    for b in bits:
        if b in gains and _is_one(mdp, b, pol[b]):
            out[b] = gains[b][1]
    if not any(s not in bit_set for s in gains):
        for k, b in enumerate(bits):
            if b in gains and not _is_one(mdp, b, pol[b]):
                if all(_is_one(mdp, c, pol[c]) for c in bits[:k]):
                    out[b] = gains[b][1]
                break
    return out


def _ranks(variant: Variant, mdp: Mdp) -> dict[int, int] | None:
    if isinstance(variant, Simple) and variant.order is not None:
        return {s: k for k, s in enumerate(variant.order)}
    if isinstance(variant, Topological):
        return dict(variant.order) if variant.order is not None else topological_order(mdp)
    return None


def _restrict(model: CondensedModel, policy: Mapping[int, int]) -> dict[int, int]:
    return {s: policy[s] for s in model.decisions}


# public API ----------------------------------------------------------------------


def step(
    mdp: Mdp, policy: Mapping[int, int], variant: Variant, criterion: Criterion | None = None
) -> tuple[Policy, tuple[Switch, ...]]:
    """One iteration of ``variant``; returns the new policy and the switches made."""
    model = condense(mdp, criterion)
    ev = Evaluator(model, _restrict(model, policy), check_monotone=False)
    new = dict(policy)
    if not ev.gains:
        return new, ()
    changes = _select(variant, ev, mdp, _ranks(variant, mdp))
    switches = tuple(sorted((s, policy[s], a) for s, a in changes.items()))
    new.update(changes)
    return new, switches


def greedy_step(mdp, policy, criterion=None):
    return step(mdp, policy, Greedy(), criterion)


def hybrid_step(mdp, policy, bits, criterion=None):
    return step(mdp, policy, Hybrid(tuple(bits)), criterion)


def simple_step(mdp, policy, order=None, criterion=None):
    return step(mdp, policy, Simple(None if order is None else tuple(order)), criterion)


def topological_step(mdp, policy, criterion=None, order=None):
    return step(mdp, policy, Topological(order), criterion)


def difference_step(mdp, policy, criterion=None):
    return step(mdp, policy, Difference(), criterion)


def run(
    mdp: Mdp,
    policy0: Mapping[int, int],
    variant: Variant,
    criterion: Criterion | None = None,
    max_iters: int | None = None,
    *,
    record_values: bool = False,
    check_monotone: bool = True,
    model: CondensedModel | None = None,
    on_iteration=None,
) -> Trace:
    """Iterate ``variant`` from ``policy0`` until optimal or ``max_iters`` switches sets.

    ``on_iteration(k, evaluator)`` is called before every iteration and once
    more at termination, with values and gains for the current policy.
    """
    if model is None:
        model = condense(mdp, criterion)
    start = _restrict(model, policy0)
    ev = Evaluator(model, start, check_monotone=check_monotone)
    ranks = _ranks(variant, mdp)
    switch_sets: list[tuple[Switch, ...]] = []
    snaps: list[ValueVector] | None = [] if record_values else None
    termination = "optimal"
    while True:
        if on_iteration is not None:
            on_iteration(len(switch_sets), ev)
        if not ev.gains:
            break
        if max_iters is not None and len(switch_sets) >= max_iters:
            termination = "max_iters"
            break
        changes = _select(variant, ev, mdp, ranks)
        pol = ev.policy
        switch_sets.append(tuple(sorted((s, pol[s], a) for s, a in changes.items())))
        if snaps is not None:
            snaps.append(dict(ev.values))
        ev.switch(changes)
    return Trace(
        start_policy=start,
        switch_sets=switch_sets,
        terminal_policy=dict(ev.policy),
        termination=termination,
        terminal_values=dict(ev.values),
        value_snapshots=snaps,
        model=model,
    )


def trace_to_dict(trace: Trace, mdp: Mdp, exact: bool = False, digits: int = 40) -> dict:
    """JSON-ready trace: switches and terminal policy by state name and action label.

    Values are 40-digit decimals unless ``exact`` asks for num/den strings.
    """
    from .rational import format_q, to_decimal

    fmt = format_q if exact else (lambda v: to_decimal(v, digits))
    names = mdp.names
    lab = lambda s, a: mdp.actions[s][a].label or str(a)  # noqa: E731
    out = {
        "iterations": trace.iteration_count,
        "termination": "Optimal" if trace.optimal else "MaxItersReached",
        "switches": [
            [{"state": names[s], "from": lab(s, a), "to": lab(s, b)} for s, a, b in sw] for sw in trace.switch_sets
        ],
        "terminal_policy": {names[s]: lab(s, a) for s, a in sorted(trace.terminal_policy.items())},
        "terminal_values": {names[s]: fmt(v) for s, v in sorted(trace.terminal_values.items())},
    }
    if trace.value_snapshots is not None:
        out["value_snapshots"] = [{names[s]: fmt(v) for s, v in sorted(snap.items())} for snap in trace.value_snapshots]
    return out
