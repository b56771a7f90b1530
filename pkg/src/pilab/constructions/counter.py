"""Binary-counter MDPs for greedy and hybrid policy iteration.

One topology builder serves four families. The families differ only in
how a parameter is realized: written straight into an action (simple, full),
through chain gadgets with small raw numbers (robust), or through jumps into
a target or zero sink (reachability).

State names: ``b{i}``, ``c{i}``, ``d{i}``, ``w{i}`` for the bit machinery,
``bm{i}`` / ``bp{i}`` for the single-action nodes carrying c(i) and r(i),
``e{i}.{j}`` for the node paying delta_j after the a^i_j branch succeeds.
Every state's action 0 is the start policy.
"""

from __future__ import annotations

from gmpy2 import mpq

from ..mdp import Action, Mdp, MdpBuilder, Reachability
from ..rational import ONE, ZERO
from .built import BuiltMdp, GadgetRecord
from .gadgets import add_g2, add_g2_prob, add_g3, add_jump
from .params import FullParams, ParamRanges, SimpleParams, reachability_ranges, robust_ranges

HALF = mpq(1, 2)


class _Direct:
    """Parameters written straight into actions."""

    def __init__(self, b: MdpBuilder, params):
        self.b = b
        self.p = params
        self.records: list[GadgetRecord] = []

    def value(self, kind: str, i: int) -> mpq:
        p = self.p
        if kind == "r":
            return p.r[i - 1]
        if kind == "c":
            return -p.c[i - 1]
        if kind == "eps":
            return -p.eps
        if kind == "delta":
            return p.delta_j[i - 1]
        raise KeyError(kind)

    def reward(self, src, dst, kind, i, tag, label=None, decision=False):
        self.b.add_action(src, dst, reward=self.value(kind, i), label=label)

    def chance(self, src, dst, kind, i, tag, label):
        prob = self.p.alpha if kind == "alpha" else self.p.p_j[i - 1]
        self.b.add_action(src, {dst: prob, src: ONE - prob}, label=label)

    def branch(self, src, bit, j, b1, label):
        """a^i_j: reach b1 with probability p_j (collecting delta_j), else stay."""
        prob = self.p.p_j[j - 1]
        self.b.add_action(src, {b1: prob, src: ONE - prob}, reward=prob * self.p.delta_j[j - 1], label=label)


class _Robust:
    """Gadget realization with every raw number in [-2, 2]."""

    def __init__(self, b: MdpBuilder, n: int):
        self.b = b
        self.n = n
        self.records: list[GadgetRecord] = []
        nn = mpq(n)
        self.q_big = HALF + 1 / (40 * nn)
        self.q_eps = HALF + 1 / (400 * nn)
        self.q_prob = 1 / nn + 1 / (1000 * nn * nn)

    def reward(self, src, dst, kind, i, tag, label=None, decision=False):
        b, n = self.b, self.n
        if kind in ("r", "c"):
            k = 7 * (i - 1) + (6 if kind == "r" else 3)
            raw = ONE - mpq(1, 2 * k)
            if kind == "c":
                raw = -raw
            x = src
            if decision:
                x = b.add_state(f"bp{i}", "plus")
                b.add_action(src, x, label=label)
            rec = add_g2(b, x, dst, raw, [self.q_big] * k, f"{kind}{i}", f"{kind}:{i}")
        elif kind == "eps":
            k = 100 * n
            raw = -(ONE + mpq(1, 200 * n))
            rec = add_g3(b, dst, raw, [self.q_eps] * k, f"eps@{tag}", f"eps:{tag}")
            b.add_action(src, rec.entry, label=label)
        elif kind == "delta":
            nn = mpq(n)
            raw = mpq(2 * i) / (4 * nn * nn) + 1 / (8 * nn * nn)
            a = b.add_action(src, dst, reward=raw, label=label)
            rec = GadgetRecord("direct", f"delta:{tag}", src, dst, (), None, a)
        else:
            raise KeyError(kind)
        self.records.append(rec)

    def chance(self, src, dst, kind, i, tag, label):
        k = 1000 * self.n + 2 if kind == "alpha" else 4 * i + 3
        name = f"{kind}@{tag}"
        self.records.append(add_g2_prob(self.b, src, dst, [self.q_prob] * k, name, f"{kind}:{tag}", label))

    def branch(self, src, bit, j, b1, label):
        e = self.b.add_state(f"e{bit}.{j}", "gadget-internal")
        self.chance(src, e, "p", j, f"{bit}:{j}", label)
        self.reward(e, b1, "delta", j, f"{bit}:{j}")


class _Reach:
    """Rewards and costs simulated by jumps into the target or zero sink.

    Jump probabilities are chosen so the effective reward lies in the target
    interval whenever node values stay within [1/4, 1/2].
    """

    def __init__(self, b: MdpBuilder, ranges: ParamRanges, target: int, zero: int):
        self.b = b
        self.rng = ranges
        self.target = target
        self.zero = zero
        self.records: list[GadgetRecord] = []

    def interval(self, kind, i):
        g = self.rng
        return {"r": g.r, "c": g.c, "delta": g.delta_j}[kind][i - 1] if kind != "eps" else g.eps

    def reward(self, src, dst, kind, i, tag, label=None, decision=False):
        lo, hi = self.interval(kind, i)
        if kind in ("r", "delta"):
            lo_p, hi_p = 2 * lo, 4 * hi / 3
            gadget, jump = "g4", self.target
        else:
            lo_p, hi_p = 4 * lo, 2 * hi
            gadget, jump = "g5", self.zero
        if lo_p > hi_p:
            raise ValueError(f"no jump probability realizes {kind}({i}) in [{lo}, {hi}]")
        p = (lo_p + hi_p) / 2
        self.records.append(add_jump(self.b, src, dst, jump, p, gadget, f"{kind}:{tag}", label))

    def chance(self, src, dst, kind, i, tag, label):
        prob = self.rng.alpha[0] if kind == "alpha" else self.rng.p_j[i - 1][0]
        self.b.add_action(src, {dst: prob, src: ONE - prob}, label=label)

    def branch(self, src, bit, j, b1, label):
        e = self.b.add_state(f"e{bit}.{j}", "gadget-internal")
        self.chance(src, e, "p", j, f"{bit}:{j}", label)
        self.reward(e, b1, "delta", j, f"{bit}:{j}")


def _counter(b: MdpBuilder, n: int, em, sink: int, f: tuple[int, ...] | None) -> dict:
    """Wire the counter; ``f`` is None for the simple construction (no gadget at b_i)."""
    full = f is not None
    ids: dict[str, int] = {}
    for i in range(1, n + 1):
        for kind, role in (("b", "bit"), ("c", "c"), ("d", "d"), ("w", "w")):
            ids[f"{kind}{i}"] = b.add_state(f"{kind}{i}", role)
        if full and i > 1:
            ids[f"bm{i}"] = b.add_state(f"bm{i}", "minus")
            ids[f"bp{i}"] = b.add_state(f"bp{i}", "plus")
    for kind, role in (("w", "w"), ("c", "c"), ("d", "d")):
        ids[f"{kind}{n + 1}"] = b.add_state(f"{kind}{n + 1}", role)

    def entry(j: int) -> int:
        """Where edges "to b_j" land: through b_j^- (cost c(j)) in the full construction."""
        return ids[f"bm{j}"] if full and j > 1 else ids[f"b{j}"]

    for i in range(1, n + 1):
        bi, ci, di, wi = (ids[f"{k}{i}"] for k in "bcdw")
        nxt_w, nxt_d = ids[f"w{i + 1}"], ids[f"d{i + 1}"]
        if full and i > 1:
            b.add_action(bi, ids["w1"], label="a0")
            for j in range(1, f[i - 1] + 1):
                em.branch(bi, i, j, ids["b1"], f"a{j}")
            em.chance(bi, ids[f"bp{i}"], "alpha", i, f"{i}", "1")
            em.reward(ids[f"bp{i}"], nxt_d, "r", i, f"{i}")
            em.reward(ids[f"bm{i}"], bi, "c", i, f"{i}")
        else:
            b.add_action(bi, nxt_w, label="0")
            em.reward(bi, nxt_d, "r", i, f"{i}", label="1", decision=True)
        b.add_action(ci, nxt_w, label="0")
        em.reward(ci, entry(i), "eps", 1, f"c{i}", label="1", decision=True)
        b.add_action(di, nxt_w, label="0")
        em.reward(di, ci, "eps", 1, f"d{i}", label="1", decision=True)
        b.add_action(wi, sink, label="sink")
        for j in range(i, n + 1):
            b.add_action(wi, entry(j), label=f"b{j}")
    m = n + 1
    b.add_action(ids[f"w{m}"], sink, label="sink")
    em.reward(ids[f"d{m}"], ids[f"c{m}"], "eps", 1, f"d{m}")
    em.reward(ids[f"c{m}"], sink, "eps", 1, f"c{m}")
    return ids


def _info(n: int, ids: dict[str, int], extra: dict | None = None) -> dict:
    info = {
        key: {i: ids[f"{key}{i}"] for i in range(1, n + 2) if f"{key}{i}" in ids}
        for key in ("b", "c", "d", "w", "bm", "bp")
    }
    if extra:
        info.update(extra)
    return info


def _start(mdp: Mdp) -> dict[int, int]:
    return {s: 0 for s in mdp.non_sinks()}


def with_sink_reward(mdp: Mdp, amount: mpq) -> Mdp:
    """Add ``amount`` (weighted by probability) to every transition into a sink."""
    if amount == 0:
        return mdp
    actions = []
    for acts in mdp.actions:
        new = []
        for act in acts:
            extra = sum((p for t, p in act.transitions if t in mdp.sinks), ZERO)
            new.append(Action(act.id, act.reward + amount * extra, act.transitions, act.label))
        actions.append(tuple(new))
    return Mdp(mdp.names, tuple(actions), mdp.sinks, dict(mdp.roles), mdp.direction, mdp.criterion)


def build_simple(params: SimpleParams | int) -> BuiltMdp:
    """Counter for hybrid PI: 4n + 4 states, bits b_i with actions 0 and 1."""
    p = SimpleParams.default(params) if isinstance(params, int) else params
    bad = p.violations()
    if bad:
        raise ValueError("; ".join(bad))
    b = MdpBuilder()
    sink = b.add_state("sink", "sink0", sink=True)
    em = _Direct(b, p)
    ids = _counter(b, p.n, em, sink, None)
    mdp = b.build("max")
    bits = tuple(ids[f"b{i}"] for i in range(1, p.n + 1))
    return BuiltMdp("simple", p.n, mdp, _start(mdp), bits, p, (), _info(p.n, ids, {"sink": sink}))


def build_full(params: FullParams | int, sink_reward=0) -> BuiltMdp:
    """Counter for greedy PI with the action family a^i_0..a^i_f(i) at every b_i, i > 1.

    ``sink_reward`` adds a constant reward on entering the sink; it shifts
    every value and appeal by the same amount.
    """
    p = FullParams.default(params) if isinstance(params, int) else params
    bad = p.violations()
    if bad:
        raise ValueError("; ".join(bad))
    b = MdpBuilder()
    sink = b.add_state("sink", "sink0", sink=True)
    ids = _counter(b, p.n, _Direct(b, p), sink, p.f)
    mdp = with_sink_reward(b.build("max"), mpq(sink_reward))
    bits = tuple(ids[f"b{i}"] for i in range(1, p.n + 1))
    info = _info(p.n, ids, {"sink": sink, "f": p.f, "sink_reward": mpq(sink_reward)})
    return BuiltMdp("full", p.n, mdp, _start(mdp), bits, p, (), info)


def build_robust(n: int) -> BuiltMdp:
    """Full construction whose parameters come from gadgets with raw values in [-2, 2]."""
    if n < 2:
        raise ValueError("robust construction needs n >= 2")
    rng = robust_ranges(n)
    b = MdpBuilder()
    sink = b.add_state("sink", "sink0", sink=True)
    em = _Robust(b, n)
    ids = _counter(b, n, em, sink, rng.f)
    mdp = b.build("max")
    bits = tuple(ids[f"b{i}"] for i in range(1, n + 1))
    info = _info(n, ids, {"sink": sink, "f": rng.f})
    return BuiltMdp("robust", n, mdp, _start(mdp), bits, rng, tuple(em.records), info)


def build_reachability(n: int) -> BuiltMdp:
    """Full construction under the reachability criterion.

    Positive rewards become jumps into the target, costs jumps into the zero
    sink, and the old sink becomes a node reaching the target with
    probability 1/4 (the shifted sink reward).
    """
    if n < 2:
        raise ValueError("reachability construction needs n >= 2")
    rng = reachability_ranges(n)
    b = MdpBuilder()
    target = b.add_state("target", "sink1", sink=True)
    zero = b.add_state("zero", "sink0", sink=True)
    z = b.add_state("z", "gadget-internal")
    b.add_action(z, {target: mpq(1, 4), zero: mpq(3, 4)})
    em = _Reach(b, rng, target, zero)
    ids = _counter(b, n, em, z, rng.f)
    mdp = b.build("max", Reachability(target))
    bits = tuple(ids[f"b{i}"] for i in range(1, n + 1))
    info = _info(n, ids, {"sink": z, "target": target, "zero": zero, "f": rng.f})
    return BuiltMdp("reachability", n, mdp, _start(mdp), bits, rng, tuple(em.records), info)
