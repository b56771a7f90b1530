"""Oracles and checkers for the lower-bound constructions.

Every check returns a :class:`CheckReport`; a failing report carries a
witness saying where the predicate broke. Checks are pure and exact.
"""

from __future__ import annotations

import itertools
import math
import random
import statistics
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from gmpy2 import mpq

from .condense import CondensedModel, condense
from .constructions.built import BuiltMdp, GadgetRecord
from .constructions.gadgets import effect, gadget_g2, gadget_g2_prob, gadget_g3, gadget_g4, gadget_g5
from .constructions.params import FullParams, ParamRanges, SimpleParams, reachability_ranges, robust_ranges
from .linalg import solve_system
from .mdp import (
    Criterion,
    ImproperPolicy,
    Mdp,
    Policy,
    ValueVector,
    compute_values,
    switchable_set,
)
from .perturbation import PerturbationSpec, Random, perturb
from .rational import ONE, ZERO, format_q

# --- reports -----------------------------------------------------------------


@dataclass
class CheckReport:
    name: str
    passed: bool
    witness: Any = None
    detail: str = ""

    def __post_init__(self) -> None:
        if not self.passed and self.witness is None:
            self.witness = {"detail": self.detail or "unspecified failure"}

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        return {"name": self.name, "pass": self.passed, "witness": _jsonable(self.witness), "detail": self.detail}

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}{extra}"


def _jsonable(obj):
    if isinstance(obj, type(ZERO)):
        return format_q(obj)
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        return [_jsonable(v) for v in obj]
    return obj


def all_passed(reports: Iterable[CheckReport]) -> bool:
    return all(r.passed for r in reports)


# --- evaluation on the condensed model ---------------------------------------


def _leaks(act) -> bool:
    if act.esc == 0:
        return False
    return sum((w for _, w in act.succ), ZERO) < 1


def evaluate_condensed(model: CondensedModel, policy: Mapping[int, int]) -> dict[int, mpq]:
    """Values of ``policy`` on the decision states of ``model``.

    Raises ImproperPolicy for total reward when some state never leaks to a
    sink; under reachability such states get value 0.
    """
    chosen = {s: model.actions[s][policy[s]] for s in model.decisions}
    preds: dict[int, list[int]] = {}
    for s, act in chosen.items():
        if act.esc != 0:
            for t, _ in act.succ:
                preds.setdefault(t, []).append(s)
    live = {s for s, act in chosen.items() if _leaks(act)}
    stack = list(live)
    while stack:
        t = stack.pop()
        for s in preds.get(t, ()):
            if s not in live:
                live.add(s)
                stack.append(s)
    dead = [s for s in model.decisions if s not in live]
    if dead and not model.least_fixed_point:
        raise ImproperPolicy(dead)
    known = {s: ZERO for s in dead}
    rows = {}
    for s in live:
        act = chosen[s]
        rows[s] = (act.reward, {t: w for t, w in act.succ})
    values = dict(known)
    values.update(solve_system(rows, known))
    return values


def policy_values(built: BuiltMdp, policy: Mapping[int, int], model: CondensedModel | None = None) -> ValueVector:
    """Exact values of every state under ``policy`` (decision states suffice)."""
    if model is None:
        return compute_values(built.mdp, policy)
    return model.expand(evaluate_condensed(model, policy))


# --- brute force ---------------------------------------------------------------


class CapExceeded(ValueError):
    pass


def brute_force_optimal(
    mdp: Mdp, criterion: Criterion | None = None, cap: int = 2**20
) -> tuple[Policy, ValueVector]:
    """Enumerate every positional policy and return a uniformly optimal one.

    Improper policies are skipped under total reward. Raises ValueError if no
    single policy is best at every state.
    """
    crit = mdp.criterion if criterion is None else criterion
    model = condense(mdp, crit)
    decisions = list(model.decisions)
    sizes = [len(model.actions[s]) for s in decisions]
    total = math.prod(sizes)
    if total > cap:
        raise CapExceeded(f"policy space has {total} policies, cap is {cap}")
    sign = 1 if mdp.direction == "max" else -1
    best: dict[int, mpq] | None = None
    best_sum = None
    best_policy = None
    for choice in itertools.product(*(range(k) for k in sizes)):
        policy = dict(zip(decisions, choice))
        try:
            vals = evaluate_condensed(model, policy)
        except ImproperPolicy:
            continue
        score = sign * sum(vals.values(), ZERO)
        if best is None:
            best = dict(vals)
        else:
            for s, v in vals.items():
                if sign * v > sign * best[s]:
                    best[s] = v
        if best_sum is None or score > best_sum:
            best_sum, best_policy = score, policy
    if best_policy is None:
        raise ValueError("every policy is improper")
    vals = evaluate_condensed(model, best_policy)
    for s in decisions:
        if vals[s] != best[s]:
            raise ValueError(f"no single policy is optimal at every state (state {mdp.names[s]})")
    return best_policy, model.expand(vals)


# --- counter bookkeeping -----------------------------------------------------


def _label(built: BuiltMdp, policy: Mapping[int, int], s: int) -> str:
    return built.mdp.actions[s][policy.get(s, 0)].label


def bit_set(built: BuiltMdp, policy: Mapping[int, int]) -> frozenset[int]:
    """B: the bits whose state selects action 1."""
    return frozenset(i for i, s in built.info["b"].items() if i <= built.n and _label(built, policy, s) == "1")


def counter_value(bits: Iterable[int]) -> int:
    return sum(1 << (i - 1) for i in bits)


def _action_index(label: str) -> int | None:
    if label.startswith("a") and label[1:].isdigit():
        return int(label[1:])
    return None


def invariant_failures(built: BuiltMdp, policy: Mapping[int, int], which: str = "strong") -> list[dict]:
    """Every clause of the strong or weak invariant that ``policy`` violates."""
    if which not in ("strong", "weak"):
        raise ValueError("which must be 'strong' or 'weak'")
    info, n = built.info, built.n
    lab = lambda s: _label(built, policy, s)  # noqa: E731
    B = sorted(bit_set(built, policy))
    top = max(B, default=0)
    last = min(B) if B else None
    full = built.topology == "full"
    out = []

    def want(key, i, allowed):
        got = lab(info[key][i])
        if got not in allowed:
            out.append({"state": f"{key}{i}", "expected": sorted(allowed), "actual": got})

    for i in range(1, n + 1):
        if i in B:
            want("c", i, {"1"})
            want("d", i, {"1"})
            want("w", i, {f"b{i}"})
            continue
        want("c", i, {"0"})
        want("d", i, {"0"})
        if i > top:
            want("w", i, {"sink"})
        else:
            ell = min(j for j in B if j >= i)
            want("w", i, {f"b{ell}"})
        if full and i >= 2 and which == "strong":
            want("b", i, {"a0"} if last != 1 else {"a0", "a3"})
    return out


def check_invariant(built: BuiltMdp, policy: Mapping[int, int], which: str = "strong") -> CheckReport:
    fails = invariant_failures(built, policy, which)
    B = sorted(bit_set(built, policy))
    return CheckReport(
        f"{which}-invariant",
        not fails,
        {"bits": B, "violations": fails[:5]} if fails else None,
        f"B={B}",
    )


def strong_points(trace, built: BuiltMdp) -> list[tuple[int, Policy]]:
    """(iteration index, policy) for every policy of the trace satisfying the strong invariant."""
    return [(k, pol) for k, pol in enumerate(trace.policies()) if not invariant_failures(built, pol, "strong")]


def check_counter_trace(trace, built: BuiltMdp) -> CheckReport:
    """Bit vectors at strong-invariant points must count 0, 1, ..., 2^n - 1."""
    seq: list[tuple[int, int]] = []
    for k, pol in strong_points(trace, built):
        v = counter_value(bit_set(built, pol))
        if not seq or seq[-1][1] != v:
            seq.append((k, v))
    want = list(range(2**built.n))
    got = [v for _, v in seq]
    if got == want and trace.optimal:
        return CheckReport("counter-trace", True, detail=f"{len(got)} counter states")
    for idx, (k, v) in enumerate(seq):
        if idx >= len(want) or v != want[idx]:
            return CheckReport(
                "counter-trace", False, {"iteration": k, "expected": want[idx] if idx < len(want) else None, "actual": v}
            )
    return CheckReport(
        "counter-trace",
        False,
        {"iteration": trace.iteration_count, "reached": got[-1] if got else None, "termination": trace.termination},
        "trace ended before the counter finished",
    )


def _classify(built: BuiltMdp, s: int, old: str, new: str, i: int, B: frozenset[int]) -> set[int]:
    """Phases of the step from bit set ``B`` adding bit ``i`` that allow this switch."""
    info = built.info
    full = built.topology == "full"
    role = {st: (key, j) for key in ("b", "c", "d", "w") for j, st in info[key].items()}
    if s not in role:
        return set()
    key, j = role[s]
    phases: set[int] = set()
    if key == "b":
        if j == i and new == "1":
            phases.add(1)
        elif j < i and j in B and new in ("a0", "0"):
            phases.add(3)
        elif full and j >= 2 and j not in B and j != i:
            a, b = _action_index(old), _action_index(new)
            if a is not None and b == a + 1:
                phases |= {0, 1, 2} | ({3} if i == 1 else set())
            if i > 1 and j > i and new == "a0":
                phases.add(3)
        elif full and j == i and i >= 2:
            a, b = _action_index(old), _action_index(new)
            if a is not None and b == a + 1:
                phases.add(0)
    elif key == "w" and j <= i and new == f"b{i}":
        phases.add(2)
    elif key == "c" and j == i and new == "1":
        phases.add(2)
    elif key == "d" and j == i and new == "1":
        phases.add(3)
    elif key in ("c", "d") and j < i and new == "0":
        phases.add(3)
    return phases


def check_phase_schedule(trace, built: BuiltMdp) -> CheckReport:
    """Switch sets between consecutive strong-invariant points follow phases 0-3 in order.

    Phase 0 only increments the action counters at bits outside B; phase 1
    sets the lowest zero bit i; phase 2 points w_j (j <= i) at b_i and sets
    c_i; phase 3 sets d_i and resets everything below i.
    """
    points = strong_points(trace, built)
    policies = list(trace.policies())
    if not points or points[0][0] != 0:
        return CheckReport("phase-schedule", False, {"iteration": 0}, "start policy is not a strong point")
    for (k0, p0), (k1, p1) in zip(points, points[1:]):
        B = bit_set(built, p0)
        B1 = bit_set(built, p1)
        if B1 == B:
            continue
        free = [j for j in range(1, built.n + 1) if j not in B]
        i = min(free)
        expect = frozenset(j for j in B if j > i) | {i}
        if B1 != expect:
            return CheckReport("phase-schedule", False, {"iteration": k1, "from": sorted(B), "to": sorted(B1)})
        phase = 0
        seen_one = False
        for k in range(k0, k1):
            allowed = {p for p in range(4) if p >= phase}
            for s, a_old, a_new in trace.switch_sets[k]:
                old = built.mdp.actions[s][a_old].label
                new = built.mdp.actions[s][a_new].label
                ph = _classify(built, s, old, new, i, B)
                if not ph:
                    return CheckReport(
                        "phase-schedule",
                        False,
                        {"iteration": k, "state": built.mdp.names[s], "old": old, "new": new, "adding": i},
                        "switch outside the schedule",
                    )
                if ph == {1}:
                    seen_one = True
                allowed &= ph
            if not allowed:
                return CheckReport(
                    "phase-schedule", False, {"iteration": k, "adding": i, "phase": phase}, "switch set mixes or reverses phases"
                )
            phase = min(allowed)
        if not seen_one:
            return CheckReport("phase-schedule", False, {"iteration": k1, "adding": i}, "bit never switched to 1")
    last = points[-1][0]
    if last != len(policies) - 1:
        return CheckReport("phase-schedule", False, {"iteration": last}, "switches after the final strong point")
    return CheckReport("phase-schedule", True, detail=f"{len(points)} strong points")


# --- parameters ------------------------------------------------------------


@dataclass
class Effective:
    """Per-occurrence parameter values as realized in a built MDP.

    ``c[1]`` is 0. ``delta`` and ``p`` are keyed by (bit, j); ``eps`` by the
    name of the state paying it.
    """

    n: int
    r: dict[int, mpq]
    c: dict[int, mpq]
    eps: dict[str, mpq]
    delta: dict[tuple[int, int], mpq] = field(default_factory=dict)
    p: dict[tuple[int, int], mpq] = field(default_factory=dict)
    alpha: dict[int, mpq] = field(default_factory=dict)
    f: tuple[int, ...] = ()

    @property
    def eps_max(self) -> mpq:
        return max(self.eps.values(), default=ZERO)

    @property
    def delta_max(self) -> mpq:
        return max(self.delta.values(), default=ZERO)

    @classmethod
    def from_full(cls, params: FullParams) -> "Effective":
        n = params.n
        tags = [f"{k}{i}" for i in range(1, n + 2) for k in "cd"]
        delta, p, alpha = {}, {}, {}
        for i in range(2, n + 1):
            alpha[i] = params.alpha
            for j in range(1, params.f[i - 1] + 1):
                delta[(i, j)] = params.delta_j[j - 1]
                p[(i, j)] = params.p_j[j - 1]
        return cls(
            n,
            {i: params.r[i - 1] for i in range(1, n + 1)},
            {i: params.c[i - 1] for i in range(1, n + 1)},
            {t: params.eps for t in tags},
            delta,
            p,
            alpha,
            params.f,
        )

    @classmethod
    def from_simple(cls, params: SimpleParams) -> "Effective":
        n = params.n
        tags = [f"{k}{i}" for i in range(1, n + 2) for k in "cd"]
        return cls(n, {i: params.r[i - 1] for i in range(1, n + 1)}, {i: ZERO for i in range(1, n + 1)}, {t: params.eps for t in tags})


def measure_effective(built: BuiltMdp, mdp: Mdp | None = None) -> Effective:
    """Measure every gadget of a robust build (optionally inside a perturbed copy)."""
    if built.family == "full":
        return Effective.from_full(built.params)
    if built.family == "simple":
        return Effective.from_simple(built.params)
    if built.family != "robust":
        raise ValueError("effective parameters are measured for simple, full and robust builds")
    m = built.mdp if mdp is None else mdp
    eff = Effective(built.n, {}, {1: ZERO}, {}, f=built.params.f)
    for rec in built.gadgets:
        kind, _, rest = rec.param.partition(":")
        val = effect(m, rec)
        if kind == "r":
            eff.r[int(rest)] = val
        elif kind == "c":
            eff.c[int(rest)] = -val
        elif kind == "eps":
            eff.eps[rest] = -val
        elif kind in ("delta", "p"):
            i, j = (int(x) for x in rest.split(":"))
            (eff.delta if kind == "delta" else eff.p)[(i, j)] = val
        elif kind == "alpha":
            eff.alpha[int(rest)] = val
    return eff


def check_effective_ranges(eff: Effective, ranges: ParamRanges) -> CheckReport:
    """Every measured parameter lies in its interval."""
    bad = []

    def test(name, v, iv):
        if not iv[0] <= v <= iv[1]:
            bad.append({"param": name, "value": v, "interval": list(iv)})

    for i, v in eff.r.items():
        test(f"r({i})", v, ranges.r[i - 1])
    for i, v in eff.c.items():
        test(f"c({i})", v, ranges.c[i - 1])
    for t, v in eff.eps.items():
        test(f"eps@{t}", v, ranges.eps)
    for (i, j), v in eff.delta.items():
        test(f"delta({i},{j})", v, ranges.delta_j[j - 1])
    for (i, j), v in eff.p.items():
        test(f"p({i},{j})", v, ranges.p_j[j - 1])
    for i, v in eff.alpha.items():
        test(f"alpha({i})", v, ranges.alpha)
    return CheckReport("effective-ranges", not bad, {"violations": bad[:5]} if bad else None, f"{len(bad)} outside")


def check_raw_range(mdp: Mdp, lo=-2, hi=2) -> CheckReport:
    """Every reward and transition probability lies in [lo, hi]."""
    lo, hi = mpq(lo), mpq(hi)
    for s in mdp.states():
        for act in mdp.actions[s]:
            nums = [act.reward] + [p for _, p in act.transitions]
            for x in nums:
                if not lo <= x <= hi:
                    return CheckReport("raw-range", False, {"state": mdp.names[s], "action": act.id, "value": x})
    return CheckReport("raw-range", True, detail=f"all raw numbers in [{lo}, {hi}]")


def check_size_bound(built: BuiltMdp) -> CheckReport:
    """Compare the state count N with the 6n^3 size bound."""
    n, N = built.n, built.num_states
    bound = 6 * n**3
    return CheckReport("size-bound", N <= bound, {"N": N, "bound": bound} if N > bound else None, f"N={N}, 6n^3={bound}")


# --- propositions -----------------------------------------------------------


def _prop_point(eff: Effective) -> list[CheckReport]:
    n = eff.n
    eps, dmax = eff.eps_max, eff.delta_max
    reports = []
    fails5, fails6 = [], []
    below = ZERO
    for i in range(1, n + 1):
        lhs = eff.r[i] - eff.c[i] - 2 * n * eps - dmax
        if not lhs > below:
            fails5.append({"bit": i, "lhs": lhs, "rhs": below})
        if i >= 2 and not eff.c[i] > dmax + 2 * n * eps + below:
            fails6.append({"bit": i, "c": eff.c[i], "rhs": dmax + 2 * n * eps + below})
        below += eff.r[i]
    reports.append(CheckReport("reward-vs-cost", not fails5, fails5[:3] or None))
    reports.append(CheckReport("cost-vs-lower-rewards", not fails6, fails6[:3] or None))
    if eff.f:
        reports.append(_ordering_point(eff))
    return reports


def _ordering_point(eff: Effective) -> CheckReport:
    """a^i_{j+1} beats every a^i_{j'} (j' > j + 1) and action 1 from a^i_j."""
    n = eff.n
    total = eff.r[1] + sum((eff.r[k] - eff.c[k] for k in range(2, n + 1)), ZERO)
    for i in range(2, n + 1):
        fi = eff.f[i - 1]
        d = lambda j: ZERO if j == 0 else eff.delta[(i, j)]  # noqa: E731
        bound = eff.alpha[i] * (eff.r[i] + total)
        for j in range(fi):
            g = [None] * (fi + 1)
            for j1 in range(j + 1, fi + 1):
                g[j1] = eff.p[(i, j1)] * (d(j1) - d(j))
            best = g[j + 1]
            if not best > 0:
                return CheckReport("action-ordering", False, {"bit": i, "j": j, "gain": best})
            for j1 in range(j + 2, fi + 1):
                if not best > g[j1]:
                    return CheckReport("action-ordering", False, {"bit": i, "j": j, "rival": j1})
            if not best > bound:
                return CheckReport("action-ordering", False, {"bit": i, "j": j, "action1-bound": bound})
    return CheckReport("action-ordering", True)


def _stated_bounds(ranges: ParamRanges) -> tuple[str, mpq, mpq, mpq] | None:
    n = ranges.n
    two = mpq(2)
    if ranges == robust_ranges(n):
        return "robust", mpq(4, n), mpq(1, 4 * n * n), two ** (-100 * n + 2)
    if ranges == reachability_ranges(n):
        return "reachability", two ** (-100 * n), two ** (-200 * n), two ** (-100 * n)
    return None


def _prop_interval(g: ParamRanges) -> list[CheckReport]:
    n = g.n
    top = max(g.f[1:], default=0)
    dmax = max((iv[1] for iv in g.delta_j[:top]), default=ZERO)
    eps = g.eps[1]
    fails5, fails6 = [], []
    below = ZERO
    for i in range(1, n + 1):
        lhs = g.r[i - 1][0] - g.c[i - 1][1] - 2 * n * eps - dmax
        if not lhs > below:
            fails5.append({"bit": i, "lhs": lhs, "rhs": below})
        if i >= 2 and not g.c[i - 1][0] > dmax + 2 * n * eps + below:
            fails6.append({"bit": i})
        below += g.r[i - 1][1]
    reports = [
        CheckReport("reward-vs-cost", not fails5, fails5[:3] or None, "worst-case endpoints"),
        CheckReport("cost-vs-lower-rewards", not fails6, fails6[:3] or None, "worst-case endpoints"),
    ]
    stated = _stated_bounds(g)
    if stated is not None:
        name, dcap, gap, ecap = stated
        spacing = min((g.delta_j[j][0] - g.delta_j[j - 1][1] for j in range(1, top)), default=gap)
        first = g.delta_j[0][0] if top else gap
        bad = {}
        if not dmax <= dcap:
            bad["delta_max"] = dmax
        if not min(spacing, first) >= gap:
            bad["spacing"] = min(spacing, first)
        if not eps <= ecap:
            bad["eps_max"] = eps
        reports.append(CheckReport(f"{name}-stated-bounds", not bad, bad or None))
    return reports


def check_propositions(params) -> list[CheckReport]:
    """Reward/cost separation inequalities for point parameters (FullParams or
    measured Effective) or, at worst-case endpoints, for interval parameters."""
    if isinstance(params, ParamRanges):
        return _prop_interval(params)
    if isinstance(params, FullParams):
        params = Effective.from_full(params)
    if isinstance(params, Effective):
        return _prop_point(params)
    raise TypeError("expected FullParams, Effective or ParamRanges")


# --- value sandwiches ----------------------------------------------------------


def _eff_for(built: BuiltMdp, params) -> Effective:
    if isinstance(params, Effective):
        return params
    if params is not None:
        return Effective.from_full(params) if isinstance(params, FullParams) else Effective.from_simple(params)
    return measure_effective(built)


def check_value_bounds(
    built: BuiltMdp, policy: Mapping[int, int], values: Mapping[int, mpq] | None = None, params=None
) -> list[CheckReport]:
    """Value sandwiches for the bits in B at a policy satisfying the invariant."""
    simple = built.topology == "simple"
    fails = invariant_failures(built, policy, "strong" if simple else "weak")
    if fails:
        raise ValueError(f"policy violates the invariant: {fails[0]}")
    eff = _eff_for(built, params)
    if values is None:
        values = compute_values(built.mdp, policy)
    shift = built.info.get("sink_reward", ZERO)
    V = lambda key, i: values[built.info[key][i]] - shift  # noqa: E731
    n = built.n
    B = bit_set(built, policy)
    eps = eff.eps_max
    if simple:
        return _simple_bounds(n, B, eff.r, eps, V)
    reports = []
    bad = []
    for i in sorted(B):
        hi = eff.r[i] + sum((eff.r[j] - eff.c[j] for j in B if j > i), ZERO)
        lo = hi - 2 * (n - i + 1) * eps
        v = V("b", i)
        if not lo <= v <= hi:
            bad.append({"bit": i, "value": v, "lo": lo, "hi": hi})
    reports.append(CheckReport("bit-value-sandwich", not bad, bad[:3] or None))
    cap = eff.r[1] + sum((eff.r[i] - eff.c[i] for i in B if i > 1), ZERO)
    v1 = V("b", 1)
    reports.append(CheckReport("b1-upper-bound", v1 <= cap, None if v1 <= cap else {"value": v1, "bound": cap}))
    w1 = V("w", 1)
    reports.append(CheckReport("b1-equals-w1", v1 == w1, None if v1 == w1 else {"b1": v1, "w1": w1}))
    return reports


def _simple_bounds(n, B, r, eps, V) -> list[CheckReport]:
    reports = []
    top = max(B, default=0)
    bad = []
    for i in range(1, top):
        if i in B:
            continue
        ell = min(j for j in B if j > i)
        vals = {"b": V("b", i), "c": V("c", i), "d": V("d", i), "b_ell": V("b", ell)}
        if len(set(vals.values())) != 1:
            bad.append({"bit": i, **vals})
    reports.append(CheckReport("zero-bits-pass-through", not bad, bad[:3] or None))
    bad = []
    for i in range(1, n + 1):
        hi = sum((r[j] for j in B if j >= i), ZERO)
        lo = hi - 2 * (n - i + 1) * eps
        if not lo <= V("b", i) <= hi:
            bad.append({"bit": i, "value": V("b", i), "lo": lo, "hi": hi})
    reports.append(CheckReport("bit-value-sandwich", not bad, bad[:3] or None))
    bad = []
    for i in B:
        for ell in range(i + 1, n + 1):
            if not V("b", i) >= V("b", ell) + r[i] - 2 * eps * n:
                bad.append({"bit": i, "ell": ell})
    reports.append(CheckReport("set-bit-dominates-higher", not bad, bad[:3] or None))
    bad = []
    for i in range(1, n + 1):
        if not V("b", i) - 2 * eps <= V("d", i) <= V("b", i):
            bad.append({"bit": i, "b": V("b", i), "d": V("d", i)})
    reports.append(CheckReport("d-close-to-b", not bad, bad[:3] or None))
    return reports


def check_switching(built: BuiltMdp, policy: Mapping[int, int], values: Mapping[int, mpq] | None = None) -> CheckReport:
    """Under the weak invariant the switchable states are exactly the bits outside B,
    and (full topology) a bit at a^i_j prefers a^i_{j+1}, or action 1 when j = f(i)."""
    simple = built.topology == "simple"
    if invariant_failures(built, policy, "strong" if simple else "weak"):
        raise ValueError("policy violates the invariant")
    mdp = built.mdp
    if values is None:
        values = compute_values(mdp, policy)
    B = bit_set(built, policy)
    decisions = {s for s in mdp.non_sinks() if len(mdp.actions[s]) > 1}
    sw = {s: acts for s, acts in switchable_set(mdp, policy, values).items() if s in decisions}
    want = {built.info["b"][i] for i in range(1, built.n + 1) if i not in B}
    if set(sw) != want:
        extra = sorted(mdp.names[s] for s in set(sw) - want)
        missing = sorted(mdp.names[s] for s in want - set(sw))
        return CheckReport("switchable-set", False, {"bits": sorted(B), "extra": extra, "missing": missing})
    if not simple:
        f = built.info["f"]
        for i in range(2, built.n + 1):
            if i in B:
                continue
            s = built.info["b"][i]
            cur = _action_index(_label(built, policy, s))
            expect = "1" if cur == f[i - 1] else f"a{cur + 1}"
            acts = sw[s]
            top = mdp.actions[s][acts[0][0]].label
            if top != expect or (len(acts) > 1 and not mdp.better(acts[0][1], acts[1][1])):
                return CheckReport("switchable-set", False, {"state": f"b{i}", "expected": expect, "actual": top})
    return CheckReport("switchable-set", True)


# --- gadget lemmas -------------------------------------------------------------


GADGET_KINDS = ("g2", "g2-prob", "g3", "g4", "g5")


def gadget_setting(kind: str, params: Mapping | None = None) -> dict:
    """Fragment, target interval and admissible radius for one gadget lemma.

    g2: k chain nodes, reward 1 - 1/(2k), q = 1/2 + 1/(4k'), interval [2^(k-2), 2^k].
    g3: reward 1 + 1/(4k), same q, interval [2^-k, 2^(2-k)].
    g2-prob: q = 1/n + 1/(1000n^2), radius 1/(3000n^2), interval [n^-k, n^(2-k)].
    g4/g5: jump probability p, radius free; exit values 1/4 and 1/2.
    """
    p = dict(params or {})
    if kind in ("g2", "g3"):
        k = int(p.get("k", 5 if kind == "g2" else 10))
        kp = int(p.get("k_prime", k))
        if kp < k:
            raise ValueError("need k' >= k")
        q = [mpq(1, 2) + mpq(1, 4 * kp)] * k
        if kind == "g2":
            frag = gadget_g2(k, ONE - mpq(1, 2 * k), q)
            iv = (mpq(2) ** (k - 2), mpq(2) ** k)
        else:
            frag = gadget_g3(k, ONE + mpq(1, 4 * k), q)
            iv = (mpq(2) ** -k, mpq(2) ** (2 - k))
        return {"fragment": frag, "interval": iv, "radius": mpq(1, 4 * kp)}
    if kind == "g2-prob":
        n = int(p.get("n", 3))
        k = int(p.get("k", 4 * n + 3))
        if not 1 <= k <= 1000 * n + 2:
            raise ValueError("need 1 <= k <= 1000n + 2")
        nn = mpq(n)
        frag = gadget_g2_prob(k, [1 / nn + 1 / (1000 * nn * nn)] * k)
        return {"fragment": frag, "interval": (nn**-k, nn ** (2 - k)), "radius": 1 / (3000 * nn * nn)}
    if kind in ("g4", "g5"):
        jp = mpq(p.get("p", mpq(1, 8)))
        frag = gadget_g4(jp) if kind == "g4" else gadget_g5(jp)
        return {"fragment": frag, "interval": None, "radius": mpq(p.get("radius", mpq(1, 100)))}
    raise ValueError(f"unknown gadget kind {kind!r}")


def _jump_interval(mdp: Mdp, rec: GadgetRecord) -> tuple[mpq, mpq]:
    act = mdp.action(rec.entry, rec.action)
    p = sum((w for t, w in act.transitions if t == rec.fallback), ZERO)
    return (p / 2, 3 * p / 4) if rec.kind == "g4" else (-p / 2, -p / 4)


def check_gadget_bounds(
    kind: str, params: Mapping | None = None, radius=None, samples: int = 100, seed: int = 0
) -> CheckReport:
    """Sample perturbations of one gadget fragment and check the lemma interval."""
    setting = gadget_setting(kind, params)
    frag = setting["fragment"]
    (rec,) = frag.gadgets
    sigma = setting["radius"] if radius is None else mpq(radius)
    rng = random.Random(seed)
    name = f"gadget-{kind}"
    for t in range(samples):
        mdp = perturb(frag.mdp, PerturbationSpec(sigma, Random(rng.randrange(2**32))))
        if kind in ("g4", "g5"):
            lo, hi = _jump_interval(mdp, rec)
            for ev in (mpq(1, 4), mpq(1, 2)):
                v = effect(mdp, rec, ev)
                if not lo <= v <= hi:
                    return CheckReport(name, False, {"sample": t, "exit_value": ev, "effect": v, "interval": [lo, hi]})
            continue
        v = effect(mdp, rec)
        lo, hi = setting["interval"]
        if not lo <= v <= hi:
            return CheckReport(name, False, {"sample": t, "effect": v, "interval": [lo, hi]})
    return CheckReport(name, True, detail=f"{samples} samples at radius {format_q(sigma)}")


# --- two-action graphs ------------------------------------------------------


def mc_diffs(built: BuiltMdp, values: Mapping[int, mpq]) -> dict[int, mpq]:
    """diff(k) = Val(k') - Val(k - 1), with vertex 0 meaning 0'."""
    rand, mins = built.info["random"], built.info["min"]
    prev = lambda k: rand[0] if k == 0 else mins[k]  # noqa: E731
    return {k: values[rand[k]] - values[prev(k - 1)] for k in range(1, built.n + 1)}


def mc_product_diffs(built: BuiltMdp, policy: Mapping[int, int], diff1: mpq) -> dict[int, mpq]:
    """diff(k) from diff(1) and the product of (p_i - S_{i-1})."""
    ps = built.params["p"]
    if built.family == "mc-topological":
        ps = ps[1:]
    out = {1: diff1}
    for k in range(2, built.n + 1):
        s = ONE if _label(built, policy, built.info["min"][k - 1]) == "1" else ZERO
        out[k] = out[k - 1] * (ps[k - 1] - s)
    return out


def check_mc_diff_formula(
    built: BuiltMdp, policy: Mapping[int, int], values: Mapping[int, mpq] | None = None, among: str = "switchable"
) -> CheckReport:
    """Exact values against the product identity; on the gadgeted graph also the
    scaled gadget differences and their strict magnitude ordering."""
    if built.topology != "mc":
        raise ValueError("diff formula applies to the two-action graphs")
    if values is None:
        values = compute_values(built.mdp, policy)
    direct = mc_diffs(built, values)
    product = mc_product_diffs(built, policy, direct[1])
    for k in direct:
        if direct[k] != product[k]:
            return CheckReport("diff-formula", False, {"vertex": k, "values": direct[k], "product": product[k]})
    if built.family != "mc-difference":
        return CheckReport("diff-formula", True)
    mins = built.info["min"]
    gadget = {}
    for k, (a, c) in built.info["children"].items():
        gadget[k] = values[c] - values[a]
        s = _label(built, policy, mins[k]) == "1"
        scale = math.prod(built.params["q" if s else "r"][k - 1], start=ONE)
        if gadget[k] != scale * direct[k]:
            return CheckReport("diff-formula", False, {"vertex": k, "gadget_diff": gadget[k], "scaled": scale * direct[k]})
    if among == "switchable":
        sw = switchable_set(built.mdp, policy, values)
        ks = [k for k in sorted(gadget) if mins[k] in sw]
    else:
        ks = sorted(gadget)
    for j, k in zip(ks, ks[1:]):
        if not abs(gadget[k]) > abs(gadget[j]):
            return CheckReport("diff-formula", False, {"lower": j, "upper": k, "abs_lower": abs(gadget[j]), "abs_upper": abs(gadget[k])})
    return CheckReport("diff-formula", True, detail=f"ordering over {len(ks)} vertices")


# --- growth tables ---------------------------------------------------------------


@dataclass(frozen=True)
class GrowthRow:
    n: int
    states: int
    iterations: int
    optimal: bool
    seed: int | None = None
    sigma: mpq | None = None


@dataclass
class GrowthTable:
    rows: list[GrowthRow]

    def min_iterations(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for row in self.rows:
            out[row.n] = min(out.get(row.n, row.iterations), row.iterations)
        return out

    @property
    def slope(self) -> float | None:
        """Least-squares slope of log2(min iterations) against n."""
        pts = sorted(self.min_iterations().items())
        if len(pts) < 2:
            return None
        xs = [float(n) for n, _ in pts]
        ys = [math.log2(max(it, 1)) for _, it in pts]
        return statistics.linear_regression(xs, ys).slope

    def to_csv(self) -> str:
        lines = ["n,states,iterations,optimal,seed,sigma"]
        for r in self.rows:
            sigma = "" if r.sigma is None else format_q(r.sigma)
            seed = "" if r.seed is None else str(r.seed)
            lines.append(f"{r.n},{r.states},{r.iterations},{str(r.optimal).lower()},{seed},{sigma}")
        return "\n".join(lines) + "\n"


def resolve_sigma(sigma, built: BuiltMdp) -> mpq | None:
    """``"1/N"`` means one over the state count of ``built``."""
    if sigma is None:
        return None
    if isinstance(sigma, str) and sigma.strip().upper() == "1/N":
        return mpq(1, built.num_states)
    return mpq(sigma)


def growth_curve(
    family: str,
    ns: Sequence[int],
    variant: str | None = None,
    sigma=None,
    seeds: Sequence[int] = (0,),
    max_iters: int | None = None,
) -> GrowthTable:
    from .families import DEFAULT_VARIANT, build, make_variant, perturb_built
    from .policy_iteration import run

    rows = []
    for n in ns:
        built = build(family, n)
        var = make_variant(variant or DEFAULT_VARIANT[family], built)
        cap = built.default_max_iters if max_iters is None else max_iters
        sig = resolve_sigma(sigma, built)
        cells = [(None, built.mdp)] if sig is None else [
            (seed, perturb_built(built, PerturbationSpec(sig, Random(seed))).mdp) for seed in seeds
        ]
        for seed, mdp in cells:
            trace = run(mdp, built.start_policy, var, max_iters=cap, check_monotone=False)
            rows.append(GrowthRow(n, built.num_states, trace.iteration_count, trace.optimal, seed, sig))
    return GrowthTable(rows)


# --- reachability -------------------------------------------------------------


def value_extremes(built: BuiltMdp, trace, states: Iterable[int] | None = None) -> tuple[mpq, mpq]:
    """Min and max value over ``states`` (default: all non-sinks) at every policy of ``trace``."""
    model = trace.model
    pick = list(built.mdp.non_sinks() if states is None else states)
    lo = hi = None
    for pol in trace.policies():
        vals = model.expand(evaluate_condensed(model, pol))
        for s in pick:
            v = vals[s]
            lo = v if lo is None or v < lo else lo
            hi = v if hi is None or v > hi else hi
    return lo, hi


def check_value_window(built: BuiltMdp, trace, lo, hi, name: str = "value-window", states=None) -> CheckReport:
    vmin, vmax = value_extremes(built, trace, states)
    ok = mpq(lo) <= vmin and vmax <= mpq(hi)
    return CheckReport(name, ok, None if ok else {"min": vmin, "max": vmax}, f"values in [{float(vmin):.6g}, {float(vmax):.6g}]")


def check_same_switches(a, b, name: str = "same-switches") -> CheckReport:
    """Two traces made identical switch sets in the same order."""
    for k, (x, y) in enumerate(zip(a.switch_sets, b.switch_sets)):
        if x != y:
            return CheckReport(name, False, {"iteration": k})
    if a.iteration_count != b.iteration_count:
        return CheckReport(name, False, {"lengths": [a.iteration_count, b.iteration_count]})
    return CheckReport(name, True, detail=f"{a.iteration_count} iterations")


def counter_states(built: BuiltMdp) -> list[int]:
    """b_i, c_i, d_i, w_i for the bits 1..n."""
    return [built.info[key][i] for key in "bcdw" for i in range(1, built.n + 1)]


# --- family-level driver ------------------------------------------------------------

CHECKS = (
    "iterations",
    "counter",
    "phases",
    "invariant",
    "values",
    "switching",
    "propositions",
    "effective",
    "raw-range",
    "size",
    "window",
    "shift",
    "diff",
    "pivots",
    "oracle",
)


def _applicable(family: str) -> set[str]:
    if family.startswith("mc-"):
        return {"iterations", "diff", "pivots", "oracle"}
    base = {"iterations", "counter", "phases", "invariant", "propositions", "oracle"}
    if family in ("simple", "full", "robust"):
        base |= {"values", "switching"}
    if family == "robust":
        base |= {"effective", "raw-range", "size"}
    if family == "reachability":
        base |= {"window", "shift"}
    return base


def _iteration_report(built: BuiltMdp, trace, tag: str = "") -> CheckReport:
    n = built.n
    name = f"iterations{tag}"
    if built.topology == "mc":
        ok = trace.iteration_count == 2**n - 1 and trace.optimal
        return CheckReport(name, ok, None if ok else {"iterations": trace.iteration_count}, f"{trace.iteration_count} == 2^n - 1")
    ok = trace.iteration_count >= 2**n and trace.optimal
    return CheckReport(name, ok, None if ok else {"iterations": trace.iteration_count}, f"{trace.iteration_count} >= {2**n}")


def verify_family(
    family: str,
    n: int,
    checks: Iterable[str] | None = None,
    sigma=None,
    seeds: Sequence[int] = (0,),
    cap: int = 2**20,
) -> list[CheckReport]:
    """Run every applicable check on one instance (or its perturbations when ``sigma`` is set)."""
    from .families import DEFAULT_VARIANT, build, make_variant, perturb_built
    from .perturbation import within_radius
    from .policy_iteration import run

    built = build(family, n)
    wanted = set(CHECKS if checks is None else checks)
    unknown = wanted - set(CHECKS)
    if unknown:
        raise ValueError(f"unknown checks {sorted(unknown)}")
    wanted &= _applicable(family)
    var = make_variant(DEFAULT_VARIANT[family], built)
    reports: list[CheckReport] = []
    sig = resolve_sigma(sigma, built)
    if sig is not None:
        for seed in seeds:
            mdp = perturb_built(built, PerturbationSpec(sig, Random(seed))).mdp
            reports.append(CheckReport(f"radius[{seed}]", within_radius(built.mdp, mdp, sig)))
            trace = run(mdp, built.start_policy, var, max_iters=built.default_max_iters, check_monotone=False)
            reports.append(_iteration_report(built, trace, f"[{seed}]"))
            if "counter" in wanted:
                r = check_counter_trace(trace, built)
                r.name += f"[{seed}]"
                reports.append(r)
        return reports

    trace = run(built.mdp, built.start_policy, var, max_iters=built.default_max_iters)
    if "iterations" in wanted:
        reports.append(_iteration_report(built, trace))
    if "counter" in wanted:
        reports.append(check_counter_trace(trace, built))
    if "phases" in wanted:
        reports.append(check_phase_schedule(trace, built))
    if "invariant" in wanted:
        a = check_invariant(built, built.start_policy)
        a.name = "strong-invariant@start"
        b = check_invariant(built, trace.terminal_policy)
        b.name = "strong-invariant@end"
        reports += [a, b]
    if wanted & {"values", "switching"}:
        eff = measure_effective(built)
        bad_v: list = []
        bad_s: list = []
        points = strong_points(trace, built)
        for k, pol in points:
            vals = policy_values(built, pol, trace.model)
            if "values" in wanted:
                bad_v += [(k, r.name, r.witness) for r in check_value_bounds(built, pol, vals, eff) if not r]
            if "switching" in wanted and k < trace.iteration_count:
                r = check_switching(built, pol, vals)
                if not r:
                    bad_s.append((k, r.witness))
        if "values" in wanted:
            reports.append(CheckReport("value-bounds", not bad_v, bad_v[:3] or None, f"{len(points)} strong points"))
        if "switching" in wanted:
            reports.append(CheckReport("switchable-set", not bad_s, bad_s[:3] or None, f"{len(points)} strong points"))
    if "propositions" in wanted:
        if family == "full":
            reports += check_propositions(built.params)
        elif family in ("robust", "reachability"):
            reports += check_propositions(built.params)
            if family == "robust":
                for r in check_propositions(measure_effective(built)):
                    r.name += "@measured"
                    reports.append(r)
    if "effective" in wanted:
        reports.append(check_effective_ranges(measure_effective(built), built.params))
    if "raw-range" in wanted:
        reports.append(check_raw_range(built.mdp))
    if "size" in wanted:
        reports.append(check_size_bound(built))
    if "window" in wanted:
        reports.append(check_value_window(built, trace, mpq(1, 4), mpq(1, 2), states=counter_states(built)))
    if "shift" in wanted:
        reports += reachability_shift_reports(n)
    if "diff" in wanted:
        bad = [(k, r.witness) for k, pol in enumerate(trace.policies()) for r in [check_mc_diff_formula(built, pol)] if not r]
        reports.append(CheckReport("diff-formula", not bad, bad[:3] or None, f"{trace.iteration_count + 1} policies"))
    if "pivots" in wanted:
        from .lp import pivot_correspondence

        rule = "dantzig" if family == "mc-difference" else "bland"
        if family != "mc-topological":
            reports.append(pivot_correspondence(built, rule)[0])
    if "oracle" in wanted:
        try:
            _, best = brute_force_optimal(built.mdp, cap=cap)
        except CapExceeded:
            pass
        else:
            got = trace.full_terminal_values()
            bad = [built.mdp.names[s] for s in best if got[s] != best[s]]
            reports.append(CheckReport("oracle", not bad, {"states": bad[:5]} if bad else None))
    return reports


def reachability_shift_reports(n: int) -> list[CheckReport]:
    """Total-reward encoding at the reachability midpoints: values stay in [0, 1/4]
    and a sink reward of 1/4 leaves the switch trace unchanged."""
    from .constructions.counter import build_full
    from .policy_iteration import Greedy, run

    params = FullParams.reachability_midpoints(n)
    plain = build_full(params)
    shifted = build_full(params, sink_reward=mpq(1, 4))
    a = run(plain.mdp, plain.start_policy, Greedy())
    b = run(shifted.mdp, shifted.start_policy, Greedy())
    lo, hi = value_extremes(plain, a, counter_states(plain))
    cap = CheckReport("pre-shift-max", hi <= mpq(1, 4), None if hi <= mpq(1, 4) else {"max": hi}, f"max={float(hi):.6g}")
    return [cap, check_same_switches(a, b, "shift-trace")]
