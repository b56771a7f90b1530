import json

import pytest
from hypothesis import given, settings

from conftest import small_mdps
from pilab.families import build, make_variant
from pilab.mdp import compute_values, switchable_set
from pilab.policy_iteration import (
    Difference,
    Greedy,
    Hybrid,
    Simple,
    Topological,
    difference_step,
    greedy_step,
    hybrid_step,
    run,
    simple_step,
    topological_step,
    trace_to_dict,
)
from pilab.verification import bit_set, brute_force_optimal, check_counter_trace


def labels(built, policy):
    return {built.mdp.names[s]: built.mdp.action(s, a).label for s, a in policy.items()}


VARIANTS = [Greedy(), Simple(), Topological(), Difference()]


@given(small_mdps(max_states=4))
@settings(max_examples=60, deadline=None)
def test_variants_reach_enumerated_optimum(case):
    mdp, start = case
    _, best = brute_force_optimal(mdp)
    for variant in VARIANTS:
        trace = run(mdp, start, variant)
        assert trace.optimal
        vals = trace.full_terminal_values()
        assert all(vals[s] == best[s] for s in mdp.non_sinks())


@given(small_mdps(max_states=4, direction="min"))
@settings(max_examples=40, deadline=None)
def test_minimization_reaches_optimum(case):
    mdp, start = case
    _, best = brute_force_optimal(mdp)
    trace = run(mdp, start, Simple())
    assert all(trace.full_terminal_values()[s] == best[s] for s in mdp.non_sinks())


def test_optimal_start_is_fixed():
    built = build("mc-basic", 3)
    opt = run(built.mdp, built.start_policy, Simple()).terminal_policy
    again = run(built.mdp, opt, Simple())
    assert again.iteration_count == 0 and again.termination == "optimal"
    for fn in (greedy_step, simple_step, topological_step, difference_step):
        pol, switches = fn(built.mdp, opt)
        assert pol == opt and not switches
    assert hybrid_step(built.mdp, opt, built.bit_states)[1] == ()


def test_max_iters_truncates():
    built = build("full", 2)
    trace = run(built.mdp, built.start_policy, Greedy(), max_iters=4)
    assert trace.iteration_count == 4
    assert trace.termination == "max_iters" and not trace.optimal
    assert trace_to_dict(trace, built.mdp)["termination"] == "MaxItersReached"


def test_simple_mc_basic_n3():
    built = build("mc-basic", 3)
    pol, switches = simple_step(built.mdp, built.start_policy)
    assert [built.mdp.names[s] for s, _, _ in switches] == ["3"]
    trace = run(built.mdp, built.start_policy, Simple())
    assert trace.iteration_count == 7
    assert labels(built, trace.terminal_policy) == {"1": "1", "2": "0", "3": "0"}


def test_mc_basic_all_vertices_switchable_at_start():
    built = build("mc-basic", 5)
    vals = compute_values(built.mdp, built.start_policy)
    assert set(switchable_set(built.mdp, built.start_policy, vals)) == set(built.bit_states)


def test_mc_basic_n10():
    built = build("mc-basic", 10)
    assert run(built.mdp, built.start_policy, Simple()).iteration_count == 1023


def test_topological_n3():
    built = build("mc-topological", 3, p=["9/10", "1/2", "1/2", "1/2"])
    trace = run(built.mdp, built.start_policy, Topological())
    assert trace.iteration_count == 7 and trace.optimal


def test_difference_n3():
    built = build("mc-difference", 3)
    trace = run(built.mdp, built.start_policy, Difference())
    mins = set(built.info["min"].values())
    assert trace.iteration_count == 7
    assert all(len(ss) == 1 and ss[0][0] in mins for ss in trace.switch_sets)


def test_greedy_first_step_full_n3():
    built = build("full", 3)
    pol, switches = greedy_step(built.mdp, built.start_policy)
    b = built.info["b"]
    moved = {s: new for s, _, new in switches}
    assert {i for i in b if b[i] in moved} == {1, 2, 3}
    got = {i: built.mdp.action(b[i], moved[b[i]]).label for i in b}
    assert got == {1: "1", 2: "a1", 3: "a1"}


def test_hybrid_only_lowest_unset_bit():
    built = build("simple", 3)
    trace = run(built.mdp, built.start_policy, make_variant("hybrid", built))
    for rec in trace.iterations:
        bits_before = bit_set(built, rec.policy_before)
        bit_moves = [s for s, _, _ in rec.switches if s in built.bit_states]
        if len(bit_moves) == 1 and built.mdp.action(bit_moves[0], rec.policy_before[bit_moves[0]]).label == "0":
            i = built.bit_states.index(bit_moves[0]) + 1
            assert i == min(set(range(1, 4)) - bits_before)
    assert check_counter_trace(trace, built)


@pytest.mark.parametrize("family,n,floor", [("simple", 3, 8), ("full", 3, 8), ("robust", 2, 4), ("reachability", 2, 4)])
def test_counters_take_exponential_time(family, n, floor):
    built = build(family, n)
    trace = run(built.mdp, built.start_policy, make_variant("hybrid" if family == "simple" else "greedy", built))
    assert trace.optimal and trace.iteration_count >= floor


def test_hybrid_requires_bits():
    with pytest.raises(ValueError):
        Hybrid(())


def test_trace_json_is_reproducible():
    built = build("simple", 3)
    var = make_variant("hybrid", built)
    a = json.dumps(trace_to_dict(run(built.mdp, built.start_policy, var, record_values=True), built.mdp), sort_keys=True)
    b = json.dumps(trace_to_dict(run(built.mdp, built.start_policy, var, record_values=True), built.mdp), sort_keys=True)
    assert a == b

