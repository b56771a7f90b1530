import itertools

import pytest
from gmpy2 import mpq
from hypothesis import given, settings

from conftest import small_mdps
from pilab.constructions.mc import build_mc_basic
from pilab.mdp import (
    Action,
    ImproperPolicy,
    Mdp,
    MdpBuilder,
    Reachability,
    appeal,
    compute_values,
    dumps_mdp,
    loads_mdp,
    reachability_as_total_reward,
    switchable_set,
    validate,
    with_criterion,
)


def two_state():
    b = MdpBuilder()
    s = b.add_state("s")
    t = b.add_state("t", sink=True)
    return b, s, t


def test_validate_well_formed():
    b, s, t = two_state()
    b.add_action(s, t, 1)
    assert validate(b.build()) == []


def test_validate_probability_sum():
    b, s, t = two_state()
    b.add_action(s, {s: mpq(1, 2), t: mpq(1, 3)})
    rules = [v.rule for v in validate(b.build())]
    assert rules == ["probability-sum"]


def test_validate_sink_action():
    b, s, t = two_state()
    b.add_action(s, t)
    mdp = b.build()
    bad = Mdp(mdp.names, (mdp.actions[0], (Action(0, mpq(0), ((s, mpq(1)),)),)), mdp.sinks)
    assert [v.rule for v in validate(bad)] == ["sink-action"]


def test_single_action_reward_five():
    b, s, t = two_state()
    b.add_action(s, t, 5)
    assert compute_values(b.build(), {s: 0})[s] == 5


def test_improper_policy_raises():
    b, s, t = two_state()
    b.add_action(s, s, 1)
    b.add_action(s, t, 0)
    mdp = b.build()
    with pytest.raises(ImproperPolicy):
        compute_values(mdp, {s: 0})
    assert compute_values(mdp, {s: 1})[s] == 0


def test_reachability_straight_to_target():
    b, s, t = two_state()
    b.add_action(s, t)
    mdp = b.build(criterion=Reachability(t))
    assert compute_values(mdp, {s: 0})[s] == 1
    enc = reachability_as_total_reward(mdp, t)
    assert enc.actions[s][0].reward == 1
    assert compute_values(enc, {s: 0})[s] == 1


def test_reachability_without_path_is_zero():
    b = MdpBuilder()
    s, u = b.add_state("s"), b.add_state("u")
    goal, other = b.add_state("goal", sink=True), b.add_state("other", sink=True)
    b.add_action(s, u)
    b.add_action(u, other)
    vals = compute_values(b.build(criterion=Reachability(goal)), {s: 0, u: 0})
    assert vals[s] == vals[u] == 0


def test_mc_basic_cost_encoding():
    # every action pays the sink cost times its probability of entering 1*
    mdp = build_mc_basic(2, sink_cost=3).mdp
    one = mdp.index()["1*"]
    for s in mdp.non_sinks():
        for act in mdp.actions[s]:
            hit = sum((p for t, p in act.transitions if t == one), mpq(0))
            assert act.reward == 3 * hit


@given(small_mdps())
@settings(max_examples=80)
def test_values_are_exact_fixed_points(case):
    mdp, pol = case
    for s in mdp.non_sinks():
        for a in range(len(mdp.actions[s])):
            policy = {**pol, s: a}
            vals = compute_values(mdp, policy)
            for u in mdp.non_sinks():
                assert appeal(mdp, vals, u, policy[u]) == vals[u]


@given(small_mdps(max_states=3))
@settings(max_examples=60)
def test_empty_switchable_set_means_optimal(case):
    mdp, _ = case
    states = mdp.non_sinks()
    policies = [dict(zip(states, choice)) for choice in itertools.product(*[range(len(mdp.actions[s])) for s in states])]
    table = [compute_values(mdp, p) for p in policies]
    best = {s: max(v[s] for v in table) for s in states}
    for pol, vals in zip(policies, table):
        empty = not switchable_set(mdp, pol, vals)
        assert empty == all(vals[s] == best[s] for s in states)


@given(small_mdps(max_states=3))
@settings(max_examples=60)
def test_reachability_encoding_matches(case):
    mdp, pol = case
    sink = next(iter(mdp.sinks))
    reach = with_criterion(mdp, Reachability(sink))
    a = compute_values(reach, pol)
    b = compute_values(reachability_as_total_reward(mdp, sink), pol)
    for s in mdp.non_sinks():
        assert 0 <= a[s] <= 1
        assert a[s] == b[s]


@given(small_mdps())
def test_json_round_trip(case):
    mdp, _ = case
    assert loads_mdp(dumps_mdp(mdp)) == mdp
