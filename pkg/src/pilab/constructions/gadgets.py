"""Gadget fragments that realize large rewards, small rewards and small probabilities.

The ``_add_*`` helpers wire a gadget into an :class:`MdpBuilder`; the public
``gadget_*`` functions build stand-alone instances whose boundary states are
sinks, which is what the lemma checks solve. ``effect`` measures what a gadget
does inside any MDP with the same structure (for example a perturbed copy).
"""

from __future__ import annotations

from collections.abc import Sequence

from gmpy2 import mpq

from ..linalg import solve_system
from ..mdp import Mdp, MdpBuilder, Reachability
from ..rational import ONE, ZERO, RationalLike
from .built import BuiltMdp, GadgetRecord


def _probabilities(q: Sequence[RationalLike], k: int) -> list[mpq]:
    qs = [mpq(x) for x in q]
    if len(qs) != k:
        raise ValueError(f"need exactly {k} chain probabilities, got {len(qs)}")
    for x in qs:
        if not 0 < x < 1:
            raise ValueError(f"chain probability {x} outside (0, 1)")
    return qs


def _chain(b: MdpBuilder, name: str, qs: Sequence[mpq], last: int, miss: int) -> list[int]:
    """Nodes v1..vk where v_i moves on with probability q_i and otherwise goes to ``miss``."""
    nodes = [b.add_state(f"{name}.{i}", "gadget-internal") for i in range(1, len(qs) + 1)]
    for i, (v, q) in enumerate(zip(nodes, qs)):
        nxt = nodes[i + 1] if i + 1 < len(nodes) else last
        b.add_action(v, {nxt: q, miss: ONE - q})
    return nodes


def add_g2(b: MdpBuilder, x: int, y: int, r: mpq, qs: Sequence[mpq], name: str, param: str) -> GadgetRecord:
    """Large reward from ``x`` to ``y``: x pays ``r`` and retries the chain until it gets through.

    ``x`` must be a fresh state; it becomes a single-action state of the gadget.
    """
    if not qs:
        raise ValueError("g2 needs at least one chain node")
    nodes = _chain(b, name, qs, y, x)
    b.add_action(x, nodes[0], reward=r)
    return GadgetRecord("g2", param, x, y, (x, *nodes), x)


def add_g2_prob(
    b: MdpBuilder, x: int, y: int, qs: Sequence[mpq], name: str, param: str, label: str
) -> GadgetRecord:
    """Action at decision state ``x`` that reaches ``y`` with probability prod(q), else returns to ``x``."""
    if not qs:
        a = b.add_action(x, y, label=label)
        return GadgetRecord("g2-prob", param, x, y, (), x, a)
    nodes = _chain(b, name, qs, y, x)
    a = b.add_action(x, nodes[0], label=label)
    return GadgetRecord("g2-prob", param, x, y, tuple(nodes), x, a)


def add_g3(b: MdpBuilder, y: int, r: mpq, qs: Sequence[mpq], name: str, param: str) -> GadgetRecord:
    """Small reward: the reward-``r`` edge into ``y`` is only reached if the whole chain is traversed.

    Returns a record whose ``entry`` is the chain head; the caller points an action at it.
    """
    if not qs:
        raise ValueError("g3 needs at least one chain node")
    z = b.add_state(f"{name}.z", "gadget-internal")
    nodes = _chain(b, name, qs, z, y)
    b.add_action(z, y, reward=r)
    return GadgetRecord("g3", param, nodes[0], y, (*nodes, z))


def add_jump(b: MdpBuilder, src: int, dst: int, jump: int, p: mpq, kind: str, param: str, label=None) -> GadgetRecord:
    """g4 (``jump`` is the target sink) or g5 (``jump`` is the zero sink): step to ``dst``
    but fall into ``jump`` with probability ``p``."""
    if not 0 <= p <= 1:
        raise ValueError(f"jump probability {p} outside [0, 1]")
    if p == 0:
        trans = {dst: ONE}
    elif p == 1:
        trans = {jump: ONE}
    else:
        trans = {jump: p, dst: ONE - p}
    a = b.add_action(src, trans, label=label)
    return GadgetRecord(kind, param, src, dst, (), jump, a)


# --- stand-alone fragments --------------------------------------------------


def gadget_g2(k: int, r: RationalLike, q: Sequence[RationalLike]) -> BuiltMdp:
    """x -> chain of k nodes -> sink y; Val(x) is the effective reward."""
    qs = _probabilities(q, k)
    b = MdpBuilder()
    y = b.add_state("y", "sink0", sink=True)
    x = b.add_state("x", "gadget-internal")
    rec = add_g2(b, x, y, mpq(r), qs, "v", "reward")
    return BuiltMdp("g2", k, b.build("max"), {}, (), {"r": mpq(r), "q": qs}, (rec,))


def gadget_g2_prob(k: int, q: Sequence[RationalLike]) -> BuiltMdp:
    """Decision state x whose only action runs a zero-reward chain toward the sink y.

    The realized probability is measured with ``effect`` (x pinned at 0, y at 1).
    """
    qs = _probabilities(q, k)
    b = MdpBuilder()
    y = b.add_state("y", "sink1", sink=True)
    x = b.add_state("x", "gadget-internal")
    rec = add_g2_prob(b, x, y, qs, "v", "probability", "1")
    return BuiltMdp("g2-prob", k, b.build("max"), {x: 0}, (), {"q": qs}, (rec,))


def gadget_g3(k: int, r: RationalLike, q: Sequence[RationalLike]) -> BuiltMdp:
    qs = _probabilities(q, k)
    b = MdpBuilder()
    y = b.add_state("y", "sink0", sink=True)
    x = b.add_state("x", "gadget-internal")
    rec = add_g3(b, y, mpq(r), qs, "v", "reward")
    b.add_action(x, rec.entry)
    rec = GadgetRecord("g3", rec.param, x, y, (x, *rec.nodes))
    return BuiltMdp("g3", k, b.build("max"), {}, (), {"r": mpq(r), "q": qs}, (rec,))


def _jump_fragment(kind: str, p: RationalLike, exit_value: RationalLike) -> BuiltMdp:
    """a -(g4/g5)-> b where b reaches the target with probability ``exit_value``."""
    p, ev = mpq(p), mpq(exit_value)
    if not 0 <= ev <= 1:
        raise ValueError("exit value must be a probability")
    b = MdpBuilder()
    target = b.add_state("target", "sink1", sink=True)
    zero = b.add_state("zero", "sink0", sink=True)
    a = b.add_state("a", "gadget-internal")
    bb = b.add_state("b", "gadget-internal")
    rec = add_jump(b, a, bb, target if kind == "g4" else zero, p, kind, "reward")
    if ev in (0, 1):
        b.add_action(bb, target if ev == 1 else zero)
    else:
        b.add_action(bb, {target: ev, zero: ONE - ev})
    mdp = b.build("max", Reachability(target))
    return BuiltMdp(kind, 0, mdp, {}, (), {"p": p, "exit_value": ev}, (rec,))


def gadget_g4(p: RationalLike, exit_value: RationalLike = mpq(1, 4)) -> BuiltMdp:
    return _jump_fragment("g4", p, exit_value)


def gadget_g5(p: RationalLike, exit_value: RationalLike = mpq(1, 2)) -> BuiltMdp:
    return _jump_fragment("g5", p, exit_value)


# --- measurement -------------------------------------------------------------


def _jump_value(kind: str) -> mpq:
    return ONE if kind == "g4" else ZERO


def effect(mdp: Mdp, rec: GadgetRecord, exit_value: RationalLike = 0) -> mpq:
    """What the gadget contributes, measured exactly in ``mdp``.

    g2/g3/direct: signed effective reward Val(entry) - Val(exit).
    g2-prob/g1: probability of reaching ``exit`` before falling back.
    g4/g5: signed effective reward with Val(exit) pinned at ``exit_value``.
    """
    ev = mpq(exit_value)
    if rec.kind in ("g4", "g5"):
        act = mdp.action(rec.entry, rec.action)
        pinned = {rec.exit: ev, rec.fallback: _jump_value(rec.kind)}
        return sum((p * pinned[t] for t, p in act.transitions), act.reward) - ev
    if rec.kind == "direct":
        act = mdp.action(rec.entry, rec.action)
        return act.reward
    if rec.kind in ("g2-prob", "g1"):
        known = {rec.exit: ONE, rec.fallback: ZERO}
        vals = _solve_nodes(mdp, rec.nodes, known)
        act = mdp.action(rec.entry, rec.action)
        return sum((p * vals[t] for t, p in act.transitions), ZERO)
    known = {rec.exit: ZERO}
    vals = _solve_nodes(mdp, rec.nodes, known)
    return vals[rec.entry]


def _solve_nodes(mdp: Mdp, nodes, known) -> dict:
    rows = {}
    for v in nodes:
        (act,) = mdp.actions[v]
        rows[v] = (act.reward, {t: p for t, p in act.transitions})
    vals = dict(known)
    vals.update(solve_system(rows, known))
    return vals
