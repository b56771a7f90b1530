"""Exact linear algebra for policy evaluation.

Systems have the shape ``x_v = const_v + sum_t coef_vt * x_t``. Acyclic
parts are back-substituted; cyclic parts go through either a small dense
Gaussian elimination over a feedback vertex set or sparse state elimination
per strongly connected block. Sparse pivots are the diagonal
``1 - coef_vv``, which is nonzero for the substochastic systems produced by
proper policies.
"""

from __future__ import annotations

import heapq
from collections.abc import Callable, Hashable, Iterable, Mapping
from typing import Any

from gmpy2 import mpq

ZERO = mpq(0)
ONE = mpq(1)


class SingularSystem(ArithmeticError):
    """Raised when elimination meets a zero pivot."""


def strongly_connected_components(
    vertices: Iterable[Hashable], successors: Callable[[Hashable], Iterable[Hashable]]
) -> list[list[Hashable]]:
    """Tarjan's algorithm without recursion.

    Components are returned in reverse topological order: every component
    appears after all components reachable from it.
    """
    index: dict[Hashable, int] = {}
    low: dict[Hashable, int] = {}
    on_stack: set[Hashable] = set()
    stack: list[Hashable] = []
    out: list[list[Hashable]] = []
    counter = 0
    for root in vertices:
        if root in index:
            continue
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        work = [(root, iter(successors(root)))]
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(successors(w))))
                    advanced = True
                    break
                if w in on_stack and index[w] < low[v]:
                    low[v] = index[w]
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                if low[v] < low[parent]:
                    low[parent] = low[v]
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
    return out


Row = list  # [const, {var: coef}]


def eliminate(
    rows: dict[Any, Row], definitions: Mapping[Hashable, Any]
) -> list[tuple[Hashable, Any, dict]]:
    """Eliminate every variable in ``definitions`` from ``rows`` in place.

    ``definitions[v]`` is the key of the row defining ``x_v``. Variables are
    eliminated in a greedy minimum-fill order. The returned record lists
    ``(v, const, coefs)`` in elimination order; ``coefs`` only mention
    variables still present at that point, so replaying the record backwards
    recovers every eliminated value.
    """
    refs: dict[Hashable, set] = {v: set() for v in definitions}
    for key, (_, coefs) in rows.items():
        for t in coefs:
            if t in refs:
                refs[t].add(key)
    rank = {v: i for i, v in enumerate(definitions)}

    def cost(v: Hashable) -> int:
        key = definitions[v]
        return (len(refs[v]) - (key in refs[v])) * len(rows[key][1])

    heap = [(cost(v), rank[v], v) for v in definitions]
    heapq.heapify(heap)
    record: list[tuple[Hashable, Any, dict]] = []
    done: set[Hashable] = set()
    while heap:
        c, r, u = heapq.heappop(heap)
        if u in done:
            continue
        now = cost(u)
        if now != c:
            heapq.heappush(heap, (now, r, u))
            continue
        done.add(u)
        key = definitions[u]
        const, coefs = rows.pop(key)
        self_coef = coefs.pop(u, None)
        users = refs.pop(u)
        users.discard(key)
        for t in coefs:
            if t in refs:
                refs[t].discard(key)
        if self_coef is not None:
            pivot = ONE - self_coef
            if pivot == 0:
                raise SingularSystem(f"zero pivot while eliminating {u!r}")
            const = const / pivot
            coefs = {t: w / pivot for t, w in coefs.items()}
        record.append((u, const, coefs))
        for user in users:
            row = rows[user]
            mult = row[1].pop(u)
            if const:
                row[0] += mult * const
            target = row[1]
            for t, w in coefs.items():
                val = target.get(t, ZERO) + mult * w
                if val:
                    target[t] = val
                    if t in refs:
                        refs[t].add(user)
                else:
                    target.pop(t, None)
                    if t in refs:
                        refs[t].discard(user)
            for t in coefs:
                if t in refs and t not in done:
                    heapq.heappush(heap, (cost(t), rank[t], t))
    return record


def _compose(maps: list, lo: int, hi: int) -> tuple:
    """Compose affine maps ``z -> a*z + L`` for maps[lo:hi] (outermost first)."""
    if hi - lo == 1:
        return maps[lo]
    mid = (lo + hi) // 2
    a1, c1, l1 = _compose(maps, lo, mid)
    a2, c2, l2 = _compose(maps, mid, hi)
    coefs = dict(l1)
    for t, w in l2.items():
        val = coefs.get(t, ZERO) + a1 * w
        if val:
            coefs[t] = val
        else:
            coefs.pop(t, None)
    return a1 * a2, c1 + a1 * c2, coefs


def compress_chains(rows: dict[Any, Row], definitions: dict[Hashable, Any], min_length: int = 4) -> list:
    """Contract paths of defined variables that only their predecessor uses.

    A path u1 -> u2 -> ... -> um where each later u is referenced by exactly
    one row (its predecessor's) is folded into u1's row by composing the
    affine maps in a balanced tree, which keeps the number of big-number
    normalizations logarithmic in the path length. Rows of u2..um are removed
    from ``rows``/``definitions`` and returned as an elimination record
    prefix (each still mentions its successor).
    """
    users: dict[Hashable, list] = {v: [] for v in definitions}
    for key, (_, coefs) in rows.items():
        for t in coefs:
            if t in users:
                users[t].append(key)

    def nxt(u: Hashable):
        key = definitions[u]
        found = None
        for t in rows[key][1]:
            if t != u and t in users and users[t] == [key] and t not in rows[definitions[t]][1]:
                if found is not None:
                    return None
                found = t
        return found

    succ = {u: nxt(u) for u in definitions}
    interior = {t for t in succ.values() if t is not None}
    record: list = []
    for head in list(definitions):
        if head in interior or succ[head] is None:
            continue
        path = [head]
        seen = {head}
        while succ[path[-1]] is not None and succ[path[-1]] not in seen:
            path.append(succ[path[-1]])
            seen.add(path[-1])
        if len(path) < min_length:
            continue
        maps = []
        for i, u in enumerate(path):
            const, coefs = rows[definitions[u]]
            nx = path[i + 1] if i + 1 < len(path) else None
            rest = {t: w for t, w in coefs.items() if t != nx}
            maps.append((coefs.get(nx, ZERO) if nx is not None else ZERO, const, rest))
        _, const, coefs = _compose(maps, 0, len(maps))
        for u in path[1:]:
            c, co = rows.pop(definitions.pop(u))
            record.append((u, c, dict(co)))
        rows[definitions[head]] = [const, coefs]
    return record


def back_substitute(record: list[tuple[Hashable, Any, dict]], values: dict) -> dict:
    """Replay an elimination record backwards, filling ``values`` in place."""
    for v, const, coefs in reversed(record):
        total = const
        for t, w in coefs.items():
            total += w * values[t]
        values[v] = total
    return values


def _dfs(rows: Mapping[Hashable, tuple[Any, Mapping]]) -> tuple[list, set]:
    """Postorder of the dependency graph and the targets of its back edges."""
    state: dict[Hashable, int] = {}  # 1 = on the DFS path, 2 = finished
    post: list = []
    back: set = set()
    for root in rows:
        if root in state:
            continue
        state[root] = 1
        work = [(root, iter(rows[root][1]))]
        while work:
            v, it = work[-1]
            for t in it:
                if t not in rows:
                    continue
                st = state.get(t)
                if st is None:
                    state[t] = 1
                    work.append((t, iter(rows[t][1])))
                    break
                if st == 1:
                    back.add(t)
            else:
                work.pop()
                state[v] = 2
                post.append(v)
    return post, back


def solve_system(
    rows: Mapping[Hashable, tuple[Any, Mapping[Hashable, Any]]],
    known: Mapping[Hashable, Any],
    max_feedback: int = 16,
) -> dict:
    """Solve ``x_v = const_v + sum coef_vt x_t`` for every ``v`` in ``rows``.

    Variables outside ``rows`` must appear in ``known``. Returns a dict with
    the solved values only.

    Acyclic systems are back-substituted in DFS postorder. With a small
    feedback set (targets of DFS back edges) every value is first written as
    an affine function of the feedback unknowns, and the small dense system
    for those is solved by Gaussian elimination. Otherwise the system is split
    into strongly connected blocks solved by sparse elimination.
    """
    post, feedback = _dfs(rows)
    if not feedback:
        values: dict = {}
        for v in post:
            const, coefs = rows[v]
            total = const
            for t, w in coefs.items():
                total += w * (values[t] if t in values else known[t])
            values[v] = total
        return values
    if len(feedback) <= max_feedback:
        return _solve_feedback(rows, known, post, feedback)
    return _solve_blocks(rows, known)


def _solve_feedback(rows, known, post, feedback) -> dict:
    fb = sorted(feedback, key=post.index)
    pos = {f: i for i, f in enumerate(fb)}
    size = len(fb)
    exprs: dict = {}  # v -> (const, [coef per feedback unknown]) for non-feedback v
    rhs: dict = {}
    for v in post:
        const, coefs = rows[v]
        total = const
        vec = [ZERO] * size
        for t, w in coefs.items():
            if t in pos:
                vec[pos[t]] += w
            elif t in exprs:
                c, tv = exprs[t]
                total += w * c
                for i, x in enumerate(tv):
                    if x:
                        vec[i] += w * x
            else:
                total += w * known[t]
        if v in pos:
            rhs[v] = (total, vec)
        else:
            exprs[v] = (total, vec)
    matrix = []
    consts = []
    for i, f in enumerate(fb):
        total, vec = rhs[f]
        matrix.append([(ONE if j == i else ZERO) - vec[j] for j in range(size)])
        consts.append(total)
    solution = solve_dense(matrix, consts)
    values = dict(zip(fb, solution))
    for v, (c, vec) in exprs.items():
        total = c
        for x, y in zip(vec, solution):
            if x:
                total += x * y
        values[v] = total
    return values


def _solve_blocks(rows, known) -> dict:
    values: dict = {}

    def succ(v: Hashable) -> Iterable[Hashable]:
        return (t for t in rows[v][1] if t in rows)

    for comp in strongly_connected_components(rows, succ):
        if len(comp) == 1:
            v = comp[0]
            const, coefs = rows[v]
            total = const
            self_coef = None
            for t, w in coefs.items():
                if t == v:
                    self_coef = w
                elif t in values:
                    total += w * values[t]
                else:
                    total += w * known[t]
            if self_coef is not None:
                pivot = ONE - self_coef
                if pivot == 0:
                    raise SingularSystem(f"zero pivot at {v!r}")
                total = total / pivot
            values[v] = total
            continue
        block = set(comp)
        local: dict[Hashable, Row] = {}
        for v in comp:
            const, coefs = rows[v]
            inner = {}
            for t, w in coefs.items():
                if t in block:
                    inner[t] = w
                elif t in values:
                    const = const + w * values[t]
                else:
                    const = const + w * known[t]
            local[v] = [const, inner]
        record = eliminate(local, {v: v for v in comp})
        back_substitute(record, values)
    return values


def solve_dense(matrix: list[list[Any]], rhs: list[Any]) -> list:
    """Gaussian elimination with partial pivoting by magnitude, exact rationals.

    Kept as an independent reference solver for tests and small systems.
    """
    size = len(matrix)
    a = [[mpq(x) for x in row] + [mpq(b)] for row, b in zip(matrix, rhs)]
    for col in range(size):
        pivot = max(range(col, size), key=lambda r: abs(a[r][col]))
        if a[pivot][col] == 0:
            raise SingularSystem(f"singular at column {col}")
        a[col], a[pivot] = a[pivot], a[col]
        p = a[col][col]
        for r in range(col + 1, size):
            factor = a[r][col] / p
            if factor:
                row, top = a[r], a[col]
                for k in range(col, size + 1):
                    row[k] -= factor * top[k]
    x = [ZERO] * size
    for r in range(size - 1, -1, -1):
        total = a[r][size] - sum((a[r][k] * x[k] for k in range(r + 1, size)), ZERO)
        x[r] = total / a[r][r]
    return x
