import pytest
from gmpy2 import mpq
from hypothesis import given, settings

from conftest import small_mdps
from pilab.condense import condense
from pilab.families import build
from pilab.mdp import ImproperPolicy, MdpBuilder, Reachability, compute_values, with_criterion
from pilab.verification import evaluate_condensed


@given(small_mdps())
@settings(max_examples=80)
def test_condensed_values_match_direct_solve(case):
    mdp, pol = case
    model = condense(mdp)
    assert model.expand(evaluate_condensed(model, pol)) == compute_values(mdp, pol)


@pytest.mark.parametrize("family,n", [("simple", 3), ("full", 2), ("robust", 2), ("mc-difference", 3), ("reachability", 2)])
def test_construction_start_policies(family, n):
    built = build(family, n)
    model = condense(built.mdp)
    got = model.expand(evaluate_condensed(model, built.start_policy))
    assert got == compute_values(built.mdp, built.start_policy)


def test_normalized_self_loop():
    # s loops with 1/2 under action 0 earning 1 per visit, so the escape weight is 1/2
    b = MdpBuilder()
    s = b.add_state("s")
    t = b.add_state("t", sink=True)
    b.add_action(s, {s: mpq(1, 2), t: mpq(1, 2)}, 1)
    b.add_action(s, t, 0)
    (act, _) = condense(b.build()).actions[s]
    assert act.esc == mpq(1, 2)
    assert act.reward == 2
    assert act.succ == ()


def test_trapped_chain_is_improper_under_total_reward():
    b = MdpBuilder()
    s, u = b.add_state("s"), b.add_state("u")
    t = b.add_state("t", sink=True)
    b.add_action(s, u)
    b.add_action(s, t)
    b.add_action(u, u, 1)
    with pytest.raises(ImproperPolicy):
        condense(b.build())
    # zero-reward trap is fine for reachability: it just never hits the target
    b2 = MdpBuilder()
    s, u = b2.add_state("s"), b2.add_state("u")
    t = b2.add_state("t", sink=True)
    b2.add_action(s, u)
    b2.add_action(s, t)
    b2.add_action(u, u)
    mdp = with_criterion(b2.build(), Reachability(t))
    model = condense(mdp)
    vals = model.expand(evaluate_condensed(model, {s: 0}))
    assert vals[s] == 0 and vals[u] == 0
