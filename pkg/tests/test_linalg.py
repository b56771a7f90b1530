import random

import pytest
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from pilab.linalg import (
    SingularSystem,
    back_substitute,
    compress_chains,
    eliminate,
    solve_dense,
    solve_system,
    strongly_connected_components,
)


@st.composite
def contracting_systems(draw, max_size=7):
    """x = c + W x with every row of W summing to at most 4/5."""
    size = draw(st.integers(1, max_size))
    rows = {}
    for v in range(size):
        targets = draw(st.lists(st.integers(0, size - 1), max_size=3, unique=True))
        coefs = {}
        for t in targets:
            coefs[t] = mpq(draw(st.integers(1, 4)), 5 * max(1, len(targets)))
        rows[v] = (mpq(draw(st.integers(-20, 20)), draw(st.integers(1, 6))), coefs)
    return rows


def dense_route(rows):
    order = sorted(rows)
    matrix = [[(1 if u == v else 0) - rows[u][1].get(v, 0) for v in order] for u in order]
    return dict(zip(order, solve_dense(matrix, [rows[u][0] for u in order])))


@given(contracting_systems())
@settings(max_examples=150)
def test_sparse_solver_matches_dense_elimination(rows):
    expect = dense_route(rows)
    assert solve_system(rows, {}) == expect
    # force the block decomposition path as well
    assert solve_system(rows, {}, max_feedback=0) == expect


def test_known_values_are_used():
    rows = {"x": (mpq(1), {"y": mpq(1, 2), "k": mpq(1, 2)}), "y": (mpq(0), {"x": mpq(1, 2)})}
    got = solve_system(rows, {"k": mpq(4)})
    # x = 1 + y/2 + 2, y = x/2  ->  x = 4
    assert got == {"x": mpq(4), "y": mpq(2)}


def test_dense_singular():
    with pytest.raises(SingularSystem):
        solve_dense([[1, 1], [2, 2]], [1, 2])


def _chain_rows(length, rng):
    rows = {("r", i): [mpq(rng.randint(-5, 5), 3), {i + 1: mpq(rng.randint(1, 9), 10)}] for i in range(length - 1)}
    rows[("r", length - 1)] = [mpq(rng.randint(-5, 5)), {"z": mpq(1, 2)}]
    rows["top"] = [mpq(0), {0: mpq(1, 2), "z": mpq(1, 4)}]
    defs = {i: ("r", i) for i in range(length)}
    return rows, defs


@pytest.mark.parametrize("length", [1, 4, 9, 40])
def test_chain_contraction_agrees_with_plain_elimination(length):
    rng = random.Random(length)
    a_rows, defs = _chain_rows(length, rng)
    b_rows = {k: [c, dict(m)] for k, (c, m) in a_rows.items()}
    plain = eliminate(a_rows, dict(defs))
    b_defs = dict(defs)
    fast = compress_chains(b_rows, b_defs)
    fast += eliminate(b_rows, b_defs)
    assert a_rows["top"] == b_rows["top"]
    z = {"z": mpq(7, 3)}
    assert back_substitute(plain, dict(z)) == back_substitute(fast, dict(z))


def test_components_in_reverse_topological_order():
    graph = {1: [2], 2: [1, 3], 3: [4], 4: [3], 5: [1]}
    comps = strongly_connected_components(graph, lambda v: graph[v])
    sets = [frozenset(c) for c in comps]
    assert set(sets) == {frozenset({1, 2}), frozenset({3, 4}), frozenset({5})}
    assert sets.index(frozenset({3, 4})) < sets.index(frozenset({1, 2})) < sets.index(frozenset({5}))
