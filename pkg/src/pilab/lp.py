"""Linear-programming view of an MDP and the simplex/policy-iteration correspondence.

For a maximizing MDP the program is

    minimize  sum_s y_s   subject to  (J - P) y >= c,

one row per action, one column per non-sink state (sinks are pinned at 0, so
transitions into them only touch the right-hand side). Minimizing (cost)
MDPs give the mirror program: maximize sum_s y_s subject to (J - P) y <= c.
A basis picks one row per state, i.e. a policy, and a pivot swaps the row of
one state, i.e. a single switch.
"""

from __future__ import annotations

import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

from gmpy2 import mpq

from .linalg import solve_system
from .mdp import Mdp, Reachability, reachability_as_total_reward
from .rational import ONE, ZERO, format_q, parse_q, terminating_decimal
from .verification import CheckReport


@dataclass(frozen=True)
class LpRow:
    state: int
    action: int
    coefs: tuple[tuple[int, mpq], ...]  # column -> entry of J - P
    rhs: mpq


@dataclass(frozen=True)
class LpInstance:
    columns: tuple[int, ...]  # state ids, in state order
    names: tuple[str, ...]  # state names for the columns
    rows: tuple[LpRow, ...]
    sense: str  # "min" (rows >=) or "max" (rows <=)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows), len(self.columns)

    @property
    def num_states(self) -> int:
        return len(self.columns)

    @property
    def num_actions(self) -> int:
        return len(self.rows)

    def col_index(self) -> dict[int, int]:
        return {s: k for k, s in enumerate(self.columns)}

    def J(self) -> list[list[int]]:
        idx = self.col_index()
        out = []
        for row in self.rows:
            line = [0] * len(self.columns)
            line[idx[row.state]] = 1
            out.append(line)
        return out

    def P(self) -> list[list[mpq]]:
        idx = self.col_index()
        out = []
        for row, jrow in zip(self.rows, self.J()):
            line = [ZERO] * len(self.columns)
            for s, v in row.coefs:
                line[idx[s]] = mpq(jrow[idx[s]]) - v
            out.append(line)
        return out

    def c(self) -> list[mpq]:
        return [row.rhs for row in self.rows]

    def row_of(self, state: int, action: int) -> int:
        for k, row in enumerate(self.rows):
            if row.state == state and row.action == action:
                return k
        raise KeyError((state, action))


def export_lp(mdp: Mdp) -> LpInstance:
    """Rows in (state, action) order; reachability becomes reward on entering the target."""
    work = mdp
    if isinstance(mdp.criterion, Reachability):
        work = reachability_as_total_reward(mdp, mdp.criterion.target)
    cols = tuple(work.non_sinks())
    rows = []
    for s in cols:
        for act in work.actions[s]:
            coefs: dict[int, mpq] = {s: ONE}
            for t, p in act.transitions:
                if t in work.sinks:
                    continue
                coefs[t] = coefs.get(t, ZERO) - p
            rows.append(LpRow(s, act.id, tuple(sorted(coefs.items())), act.reward))
    sense = "min" if work.direction == "max" else "max"
    return LpInstance(cols, tuple(work.names[s] for s in cols), tuple(rows), sense)


# --- exact basic solutions ------------------------------------------------------


def basic_solution(lp: LpInstance, basis: Mapping[int, int]) -> dict[int, mpq]:
    """y with every basic row tight; ``basis`` maps a state to a row index."""
    system = {}
    for s in lp.columns:
        row = lp.rows[basis[s]]
        coefs = dict(row.coefs)
        diag = coefs.pop(s)
        if diag == 0:
            raise ValueError(f"basis row for state {s} has no diagonal entry")
        system[s] = (row.rhs / diag, {t: -v / diag for t, v in coefs.items()})
    return solve_system(system, {})


def violation(lp: LpInstance, k: int, y: Mapping[int, mpq]) -> mpq:
    """How far row k is from feasibility, positive when violated."""
    row = lp.rows[k]
    lhs = sum((v * y[s] for s, v in row.coefs), ZERO)
    gap = row.rhs - lhs
    return gap if lp.sense == "min" else -gap


def check_tight(lp: LpInstance, policy: Mapping[int, int], values: Mapping[int, mpq]) -> CheckReport:
    """Rows of the selected actions hold with equality at y = Val of the policy."""
    for s in lp.columns:
        k = lp.row_of(s, policy.get(s, 0))
        if violation(lp, k, values) != 0:
            return CheckReport("lp-tight", False, {"state": lp.names[lp.columns.index(s)], "row": k})
    return CheckReport("lp-tight", True, detail=f"{lp.num_states} selected rows")


def check_feasible(lp: LpInstance, values: Mapping[int, mpq]) -> CheckReport:
    for k in range(len(lp.rows)):
        if violation(lp, k, values) > 0:
            row = lp.rows[k]
            return CheckReport("lp-feasible", False, {"state": row.state, "action": row.action})
    return CheckReport("lp-feasible", True)


# --- pivoting --------------------------------------------------------------------

PIVOT_RULES = ("bland", "dantzig")


def _entering(lp: LpInstance, y, rule: str) -> int | None:
    best = None
    for k, row in enumerate(lp.rows):
        v = violation(lp, k, y)
        if v <= 0:
            continue
        if rule == "bland":
            # variables ordered by decreasing state id, then action id
            key = (row.state, -row.action)
        else:
            key = (v, row.state, -row.action)
        if best is None or key > best[0]:
            best = (key, k)
    return None if best is None else best[1]


def simplex_pivots(
    lp: LpInstance, start: Mapping[int, int], rule: str, max_pivots: int | None = None
) -> tuple[list[tuple[int, int]], dict[int, int], dict[int, mpq]]:
    """Run the pivot rule from the basis of policy ``start``.

    Returns the pivots as (state, new action), the final basis as a policy
    and the final basic solution.
    """
    if rule not in PIVOT_RULES:
        raise ValueError(f"unknown pivot rule {rule!r}")
    basis = {s: lp.row_of(s, start.get(s, 0)) for s in lp.columns}
    pivots = []
    while True:
        y = basic_solution(lp, basis)
        if max_pivots is not None and len(pivots) >= max_pivots:
            break
        k = _entering(lp, y, rule)
        if k is None:
            break
        row = lp.rows[k]
        basis[row.state] = k
        pivots.append((row.state, row.action))
    policy = {s: lp.rows[k].action for s, k in basis.items()}
    return pivots, policy, y


def pivot_correspondence(built, rule: str, max_pivots: int | None = None) -> tuple[CheckReport, list]:
    """Compare simplex pivots on the exported LP with the matching single-switch PI.

    Bland pairs with Simple PI (highest-index improving state) and Dantzig
    with Difference PI (largest improvement).
    """
    from .policy_iteration import Difference, Simple, run

    if built.topology != "mc":
        raise ValueError("pivot correspondence is checked on the two-action graphs")
    lp = export_lp(built.mdp)
    cap = built.default_max_iters if max_pivots is None else max_pivots
    pivots, _, _ = simplex_pivots(lp, built.start_policy, rule, cap)
    variant = Simple() if rule == "bland" else Difference()
    trace = run(built.mdp, built.start_policy, variant, max_iters=cap)
    switches = [(s, new) for sw in trace.switch_sets for s, _, new in sw]
    name = f"pivots-{rule}"
    if len(pivots) != trace.iteration_count:
        return CheckReport(name, False, {"pivots": len(pivots), "iterations": trace.iteration_count}), pivots
    for k, (a, b) in enumerate(zip(pivots, switches)):
        if a != b:
            return CheckReport(name, False, {"pivot": k, "lp": a, "pi": b}), pivots
    return CheckReport(name, True, detail=f"{len(pivots)} pivots"), pivots


def exact_optimum(lp: LpInstance, start: Mapping[int, int] | None = None) -> tuple[mpq, dict[int, mpq]]:
    """Optimal objective by exact Dantzig pivoting; the final y is checked feasible."""
    pivots, _, y = simplex_pivots(lp, start or {}, "dantzig")
    if not check_feasible(lp, y):
        raise ArithmeticError("pivoting stopped at an infeasible point")
    return sum(y.values(), ZERO), y


def float_optimum(lp: LpInstance) -> float:
    """Objective from scipy's HiGHS solver (floating point cross-check)."""
    from scipy.optimize import linprog
    from scipy.sparse import lil_matrix

    idx = lp.col_index()
    m, n = lp.shape
    A = lil_matrix((m, n))
    for k, row in enumerate(lp.rows):
        for s, v in row.coefs:
            A[k, idx[s]] = float(v)
    b = [float(r.rhs) for r in lp.rows]
    if lp.sense == "min":
        res = linprog([1.0] * n, A_ub=-A.tocsr(), b_ub=[-x for x in b], bounds=(None, None), method="highs")
        sign = 1.0
    else:
        res = linprog([-1.0] * n, A_ub=A.tocsr(), b_ub=b, bounds=(None, None), method="highs")
        sign = -1.0
    if res.status != 0:
        raise ArithmeticError(f"linprog failed: {res.message}")
    return sign * res.fun


# --- MPS ---------------------------------------------------------------------------

_UNSAFE = re.compile(r"\s")


def _name(text: str) -> str:
    return _UNSAFE.sub("_", text)


def _number(x: mpq) -> tuple[str, bool]:
    """MPS token and whether it is exact. Long decimal expansions count as inexact."""
    if x.denominator.bit_length() <= 64:
        dec = terminating_decimal(x)
        if dec is not None and len(dec) <= 40:
            return dec, True
    return repr(float(x)), False


def write_lp_file(lp: LpInstance, path) -> None:
    """Free-format MPS. Entries without a finite decimal expansion are written
    as floats and followed by an ``* EXACT row column num/den`` comment."""
    ynames = [f"y_{_name(nm)}" for nm in lp.names]
    rnames = [f"a_{_name(lp.names[lp.columns.index(r.state)])}_{r.action}" for r in lp.rows]
    idx = lp.col_index()
    lines = ["NAME pilab", "OBJSENSE", "    MIN" if lp.sense == "min" else "    MAX", "ROWS", " N obj"]
    kind = "G" if lp.sense == "min" else "L"
    lines += [f" {kind} {r}" for r in rnames]
    by_col: dict[int, list[tuple[str, mpq]]] = {k: [] for k in range(len(lp.columns))}
    for rname, row in zip(rnames, lp.rows):
        for s, v in row.coefs:
            by_col[idx[s]].append((rname, v))
    lines.append("COLUMNS")
    for k, yname in enumerate(ynames):
        lines.append(f"    {yname} obj 1")
        for rname, v in by_col[k]:
            tok, exact = _number(v)
            lines.append(f"    {yname} {rname} {tok}")
            if not exact:
                lines.append(f"* EXACT {rname} {yname} {format_q(v)}")
    lines.append("RHS")
    for rname, row in zip(rnames, lp.rows):
        if row.rhs != 0:
            tok, exact = _number(row.rhs)
            lines.append(f"    rhs {rname} {tok}")
            if not exact:
                lines.append(f"* EXACT {rname} rhs {format_q(row.rhs)}")
    lines.append("BOUNDS")
    lines += [f" FR bnd {y}" for y in ynames]
    lines.append("ENDATA")
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class MpsData:
    sense: str
    row_kinds: dict[str, str]
    entries: dict[tuple[str, str], mpq]  # (row, column) -> coefficient
    rhs: dict[str, mpq]
    columns: list[str]


def read_lp_file(path) -> MpsData:
    """Parse a file written by :func:`write_lp_file`, restoring exact values."""
    sense = "min"
    kinds: dict[str, str] = {}
    entries: dict[tuple[str, str], mpq] = {}
    rhs: dict[str, mpq] = {}
    columns: list[str] = []
    exact: dict[tuple[str, str], mpq] = {}
    section = None
    for raw in Path(path).read_text().splitlines():
        if raw.startswith("* EXACT "):
            _, _, rname, col, val = raw.split()
            exact[(rname, col)] = parse_q(val)
            continue
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw[0].isspace():
            section = raw.split()[0]
            continue
        parts = raw.split()
        if section == "OBJSENSE":
            sense = "min" if parts[0] == "MIN" else "max"
        elif section == "ROWS":
            kinds[parts[1]] = parts[0]
        elif section == "COLUMNS":
            col = parts[0]
            if not columns or columns[-1] != col:
                columns.append(col)
            for rname, val in zip(parts[1::2], parts[2::2]):
                if rname != "obj":
                    entries[(rname, col)] = parse_q(val)
        elif section == "RHS":
            for rname, val in zip(parts[1::2], parts[2::2]):
                rhs[rname] = parse_q(val)
    for (rname, col), v in exact.items():
        if col == "rhs":
            rhs[rname] = v
        else:
            entries[(rname, col)] = v
    return MpsData(sense, {k: v for k, v in kinds.items() if v != "N"}, entries, rhs, columns)


def same_program(lp: LpInstance, data: MpsData) -> bool:
    """Exact comparison of an instance with parsed MPS data."""
    ynames = [f"y_{_name(nm)}" for nm in lp.names]
    if data.columns != ynames or len(data.row_kinds) != len(lp.rows):
        return False
    if data.sense != lp.sense:
        return False
    want: dict[tuple[str, str], mpq] = {}
    rhs: dict[str, mpq] = {}
    for row in lp.rows:
        rname = f"a_{_name(lp.names[lp.columns.index(row.state)])}_{row.action}"
        for s, v in row.coefs:
            if v != 0:
                want[(rname, f"y_{_name(lp.names[lp.columns.index(s)])}")] = v
        if row.rhs != 0:
            rhs[rname] = row.rhs
    got = {k: v for k, v in data.entries.items() if v != 0}
    return got == want and data.rhs == rhs


def pivot_sequence_json(lp: LpInstance, pivots: Sequence[tuple[int, int]]) -> list[dict]:
    name = dict(zip(lp.columns, lp.names))
    return [{"state": name[s], "action": a} for s, a in pivots]
