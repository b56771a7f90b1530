"""Two-action cost-minimization graphs with min-vertices 1..n.

Vertices are the sinks ``0*`` and ``1*``, random vertices ``0'``..``n'`` and
min-vertices ``1``..``n``. Entering ``1*`` costs ``sink_cost``; the cost is
written as the action reward weighted by the probability of entering ``1*``.
Vertex "0" is ``0'``.
"""

from __future__ import annotations

from collections.abc import Sequence

from gmpy2 import mpq

from ..mdp import Mdp, MdpBuilder
from ..rational import ONE, RationalLike
from .built import BuiltMdp, GadgetRecord

HALF = mpq(1, 2)


def _check_open_unit(values: Sequence[mpq], what: str) -> None:
    for v in values:
        if not 0 < v < 1:
            raise ValueError(f"{what} must lie in (0, 1), got {v}")


def _skeleton(n: int, p: Sequence[mpq], sink_cost: mpq, p0: mpq | None):
    """Sinks and random vertices; returns the builder and id lookups."""
    if n < 1:
        raise ValueError("need n >= 1")
    if len(p) != n:
        raise ValueError(f"expected {n} probabilities p_1..p_n")
    _check_open_unit(p, "p_i")
    if sink_cost <= 0:
        raise ValueError("sink cost must be positive")
    b = MdpBuilder()
    zero = b.add_state("0*", "sink0", sink=True)
    one = b.add_state("1*", "sink1", sink=True)
    rand = [b.add_state(f"{k}'", "random") for k in range(n + 1)]
    mins = [rand[0]] + [b.add_state(str(k), "min") for k in range(1, n + 1)]
    return b, zero, one, rand, mins


def _wire_random(b, n, p, sink_cost, p0, zero, one, rand, mins) -> None:
    if p0 is None:
        b.add_action(rand[0], one, reward=sink_cost)
    else:
        b.add_action(rand[0], {one: p0, mins[n]: ONE - p0}, reward=sink_cost * p0)
    p1 = p[0]
    b.add_action(rand[1], {zero: p1, one: ONE - p1}, reward=sink_cost * (ONE - p1))
    for k in range(2, n + 1):
        pk = p[k - 1]
        b.add_action(rand[k], {rand[k - 1]: pk, mins[k - 2]: ONE - pk})


def _finish(family, n, b, mins, rand, params, gadgets=(), extra=None) -> BuiltMdp:
    mdp = b.build(direction="min")
    start = {s: 0 for s in mdp.non_sinks()}
    info = {
        "min": {k: mins[k] for k in range(1, n + 1)},
        "random": {k: rand[k] for k in range(n + 1)},
    }
    if extra:
        info.update(extra)
    return BuiltMdp(family, n, mdp, start, tuple(mins[1:]), params, tuple(gadgets), info)


def build_mc_basic(
    n: int, p: Sequence[RationalLike] | None = None, sink_cost: RationalLike = 1
) -> BuiltMdp:
    ps = [HALF] * n if p is None else [mpq(x) for x in p]
    cost = mpq(sink_cost)
    b, zero, one, rand, mins = _skeleton(n, ps, cost, None)
    for k in range(1, n + 1):
        b.add_action(mins[k], mins[k - 1], label="0")
        b.add_action(mins[k], rand[k], label="1")
    _wire_random(b, n, ps, cost, None, zero, one, rand, mins)
    return _finish("mc-basic", n, b, mins, rand, {"p": ps, "sink_cost": cost})


def build_mc_topological(
    n: int, p: Sequence[RationalLike] | None = None, sink_cost: RationalLike = 1
) -> BuiltMdp:
    """``p`` lists p_0..p_n; p_0 is the probability of 0' entering 1*."""
    if p is None:
        ps = [mpq(9, 10)] + [HALF] * n
    else:
        ps = [mpq(x) for x in p]
    if len(ps) != n + 1:
        raise ValueError(f"expected {n + 1} probabilities p_0..p_n")
    _check_open_unit(ps[:1], "p_0")
    if not ps[0] > 1 - ps[1]:
        raise ValueError("need p_0 > 1 - p_1")
    cost = mpq(sink_cost)
    b, zero, one, rand, mins = _skeleton(n, ps[1:], cost, ps[0])
    for k in range(1, n + 1):
        b.add_action(mins[k], mins[k - 1], label="0")
        b.add_action(mins[k], rand[k], label="1")
    _wire_random(b, n, ps[1:], cost, ps[0], zero, one, rand, mins)
    return _finish("mc-topological", n, b, mins, rand, {"p": ps, "sink_cost": cost})


def f_schedule_base(n: int) -> mpq:
    """Upper end of the gadget probability interval used by the schedule.

    For n = 2 the nominal interval (1/2, 1) has no finite schedule, so the
    n = 3 interval (1/2, 5/6) is used instead.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    return HALF + mpq(1, max(n, 3))


def compute_f_schedule(n: int, base: RationalLike | None = None) -> list[int]:
    """Gadget lengths f(1..n): f(n) = 0 and f(k) is the least m with
    base^m <= (1/2)^f(k+1) / 3, decided by exact rational comparison."""
    beta = f_schedule_base(n) if base is None else mpq(base)
    if not 0 < beta < 1:
        raise ValueError("schedule base must lie in (0, 1)")
    f = [0] * (n + 1)
    for k in range(n - 1, 0, -1):
        bound = HALF ** f[k + 1] / 3
        m, power = 0, ONE
        while power > bound:
            power *= beta
            m += 1
        f[k] = m
    return f[1:]


def _add_g1(b: MdpBuilder, j: int, m: int, qs: Sequence[mpq], name: str, label: str):
    """Action at ``j`` through an ell-node chain toward ``m`` falling back to ``j``."""
    _check_open_unit(qs, "gadget probabilities")
    prev = m
    nodes = []
    for i, q in enumerate(qs, start=1):
        node = b.add_state(f"{name}.{i}", "gadget-internal")
        b.add_action(node, {prev: q, j: ONE - q})
        nodes.append(node)
        prev = node
    head = prev
    a = b.add_action(j, head, label=label)
    return head, GadgetRecord("g1", name, j, m, tuple(nodes), j, a)


def gadget_g1(ell: int, q: Sequence[RationalLike]) -> BuiltMdp:
    """Stand-alone g1: state ``j`` chooses between the chain and a stay-put action.

    ``m`` is a sink reached with cost 1; the traversal probability is the
    value of the chain head when ``j`` is pinned at cost 0 by its other action.
    """
    qs = [mpq(x) for x in q]
    if len(qs) != ell:
        raise ValueError("need exactly ell probabilities")
    b = MdpBuilder()
    zero = b.add_state("zero", "sink0", sink=True)
    m = b.add_state("m", "sink1", sink=True)
    j = b.add_state("j", "min")
    b.add_action(j, zero, label="0")
    _, rec = _add_g1(b, j, m, qs, "g1", "1")
    mdp = b.build(direction="max")
    return BuiltMdp("g1", ell, mdp, {j: 0, **{s: 0 for s in rec.nodes}}, (), {"q": qs}, (rec,))


def build_mc_difference(
    n: int,
    p: Sequence[RationalLike] | None = None,
    q: Sequence[Sequence[RationalLike]] | None = None,
    r: Sequence[Sequence[RationalLike]] | None = None,
    sink_cost: RationalLike = 1,
) -> BuiltMdp:
    """Basic graph with a g1(f(k)) gadget on each edge out of min-vertex k.

    ``q[k-1]`` are the probabilities of the gadget toward k-1 and ``r[k-1]``
    those toward k'. Both default to 1/2 + 1/(2n) (1/2 + 1/6 for n = 2).
    """
    f = compute_f_schedule(n)
    default = HALF + (f_schedule_base(n) - HALF) / 2
    ps = [HALF] * n if p is None else [mpq(x) for x in p]
    qs = [[default] * f[k] for k in range(n)] if q is None else [[mpq(x) for x in row] for row in q]
    rs = [[default] * f[k] for k in range(n)] if r is None else [[mpq(x) for x in row] for row in r]
    for k in range(n):
        if len(qs[k]) != f[k] or len(rs[k]) != f[k]:
            raise ValueError(f"gadget at vertex {k + 1} needs {f[k]} probabilities")
    cost = mpq(sink_cost)
    b, zero, one, rand, mins = _skeleton(n, ps, cost, None)
    gadgets = []
    children = {}
    for k in range(1, n + 1):
        a, ga = _add_g1(b, mins[k], mins[k - 1], qs[k - 1], f"g{k}-0", "0")
        c, gb = _add_g1(b, mins[k], rand[k], rs[k - 1], f"g{k}-1", "1")
        gadgets += [ga, gb]
        children[k] = (a, c)
    _wire_random(b, n, ps, cost, None, zero, one, rand, mins)
    params = {"p": ps, "q": qs, "r": rs, "f": f, "sink_cost": cost}
    return _finish("mc-difference", n, b, mins, rand, params, gadgets, {"children": children})


def read_probabilities(built: BuiltMdp, mdp: Mdp) -> dict:
    """Builder keyword arguments (p, plus q and r on the gadgeted graph) as
    written in ``mdp``, which must share the structure of ``built.mdp``."""
    rand = built.info["random"]
    n = built.n
    ps = [mdp.actions[rand[1]][0].transitions[0][1]]
    ps += [mdp.actions[rand[k]][0].transitions[0][1] for k in range(2, n + 1)]
    out: dict = {"sink_cost": built.params["sink_cost"]}
    if built.family == "mc-topological":
        ps = [mdp.actions[rand[0]][0].transitions[0][1]] + ps
    out["p"] = ps
    if built.family == "mc-difference":
        out["q"], out["r"] = [], []
        for rec in built.gadgets:
            chain = [mdp.actions[v][0].transitions[0][1] for v in rec.nodes]
            out["q" if rec.param.endswith("-0") else "r"].append(chain)
    return out
