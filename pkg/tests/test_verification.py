import dataclasses

import pytest
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from pilab.constructions.mc import build_mc_basic, build_mc_topological
from pilab.constructions.params import FullParams, reachability_ranges, robust_ranges
from pilab.families import build, make_variant
from pilab.mdp import Action, MdpBuilder, compute_values
from pilab.policy_iteration import run
from pilab.verification import (
    CheckReport,
    all_passed,
    bit_set,
    brute_force_optimal,
    check_counter_trace,
    check_effective_ranges,
    check_gadget_bounds,
    check_invariant,
    check_mc_diff_formula,
    check_phase_schedule,
    check_propositions,
    check_raw_range,
    check_size_bound,
    check_switching,
    check_value_bounds,
    growth_curve,
    invariant_failures,
    mc_diffs,
    measure_effective,
    strong_points,
    verify_family,
)


def default_run(family, n, **kw):
    built = build(family, n)
    var = make_variant("hybrid" if family == "simple" else "greedy", built)
    return built, run(built.mdp, built.start_policy, var, **kw)


def test_failing_report_always_has_witness():
    r = CheckReport("x", False)
    assert r.witness is not None and not r
    assert r.line().startswith("FAIL x")
    assert CheckReport("y", True).to_dict()["pass"] is True


# --- brute force ---------------------------------------------------------------


def test_brute_force_mc_basic():
    built = build_mc_basic(3)
    pol, vals = brute_force_optimal(built.mdp)
    got = {built.mdp.names[s]: built.mdp.action(s, a).label for s, a in pol.items() if s in built.bit_states}
    assert got == {"1": "1", "2": "0", "3": "0"}


def test_brute_force_single_policy():
    b = MdpBuilder()
    s, t = b.add_state("s"), b.add_state("t", sink=True)
    b.add_action(s, t, 3)
    pol, vals = brute_force_optimal(b.build())
    assert pol == {} and vals[s] == 3


def test_brute_force_simple_n2_all_bits_set():
    built, trace = default_run("simple", 2)
    pol, vals = brute_force_optimal(built.mdp)
    assert bit_set(built, pol) == {1, 2}
    assert trace.full_terminal_values() == vals


# --- counter trace and invariants -----------------------------------------------


@pytest.mark.parametrize("family", ["simple", "full"])
def test_counter_trace_n3(family):
    built, trace = default_run(family, 3)
    assert check_counter_trace(trace, built)
    assert check_phase_schedule(trace, built)


def test_truncated_trace_fails_with_witness():
    built, trace = default_run("full", 3, max_iters=5)
    rep = check_counter_trace(trace, built)
    assert not rep and rep.witness


def test_invariant_start_end_and_middle():
    built, trace = default_run("full", 3)
    assert check_invariant(built, built.start_policy)
    end = check_invariant(built, trace.terminal_policy)
    assert end and bit_set(built, trace.terminal_policy) == {1, 2, 3}
    pols = list(trace.policies())
    strong = {k for k, _ in strong_points(trace, built)}
    middle = [k for k in range(len(pols)) if k not in strong]
    assert middle
    assert any(not invariant_failures(built, pols[k], "weak") for k in middle)
    assert all(invariant_failures(built, pols[k], "strong") for k in middle)


# --- propositions -----------------------------------------------------------------


def test_propositions_defaults_and_ranges():
    assert all_passed(check_propositions(FullParams.default(4)))
    assert all_passed(check_propositions(robust_ranges(4)))
    assert all_passed(check_propositions(reachability_ranges(4)))


def test_equal_reward_and_cost_fails():
    p = FullParams.default(3)
    bad = dataclasses.replace(p, c=(p.c[0], p.r[1], p.c[2]))
    (rep,) = [r for r in check_propositions(bad) if r.name == "reward-vs-cost"]
    assert not rep and rep.witness[0]["bit"] == 2


# --- value sandwiches --------------------------------------------------------------


def test_value_bounds_at_start_are_vacuous():
    built = build("full", 3)
    assert all_passed(check_value_bounds(built, built.start_policy))


@pytest.mark.parametrize("family,n", [("simple", 3), ("full", 3)])
def test_value_bounds_at_every_strong_point(family, n):
    built, trace = default_run(family, n)
    for k, pol in strong_points(trace, built):
        assert all_passed(check_value_bounds(built, pol))
        if k < trace.iteration_count:
            assert check_switching(built, pol)


def test_corrupted_reward_breaks_sandwich():
    built, trace = default_run("full", 3)
    pol = trace.terminal_policy
    mdp = built.mdp
    b3 = built.info["b"][3]
    # route the corruption through the action b3 uses in the terminal policy
    acts = list(mdp.actions)
    old = acts[b3][pol[b3]]
    acts[b3] = tuple(a if a.id != old.id else Action(a.id, a.reward + 1000, a.transitions, a.label) for a in acts[b3])
    broken = dataclasses.replace(built, mdp=dataclasses.replace(mdp, actions=tuple(acts)))
    reports = check_value_bounds(broken, pol, params=built.params)
    bad = [r for r in reports if not r]
    assert bad and all(r.witness for r in bad)


# --- robust measurements -------------------------------------------------------------


def test_robust_measured_parameters():
    built = build("robust", 2)
    eff = measure_effective(built)
    assert check_effective_ranges(eff, built.params)
    assert check_raw_range(built.mdp)
    assert all_passed(check_propositions(eff))


def test_size_bound_reports_count():
    # the generated instance is far larger than the stated cubic bound (see notes)
    rep = check_size_bound(build("robust", 2))
    assert not rep and rep.witness


# --- gadget lemmas -------------------------------------------------------------------


@pytest.mark.parametrize(
    "kind,params",
    [("g2", {"k": 5}), ("g3", {"k": 10}), ("g2-prob", {"n": 3, "k": 15}), ("g4", {"p": "1/8"}), ("g5", {"p": "1/8"})],
)
def test_gadget_lemmas_at_their_radius(kind, params):
    assert check_gadget_bounds(kind, params, samples=100, seed=1)


def test_out_of_contract_radius_is_reported():
    rep = check_gadget_bounds("g2", {"k": 5}, radius=mpq(1, 5), samples=100)
    # out of contract, so only the report shape is asserted
    assert isinstance(rep.passed, bool) and (rep.passed or rep.witness)


# --- two-action graphs --------------------------------------------------------------


def test_diffs_at_start_n3():
    built = build_mc_basic(3)
    vals = compute_values(built.mdp, built.start_policy)
    assert mc_diffs(built, vals) == {1: mpq(-1, 2), 2: mpq(-1, 4), 3: mpq(-1, 8)}
    assert check_mc_diff_formula(built, built.start_policy)


@given(st.integers(2, 10), st.randoms(use_true_random=False))
@settings(max_examples=100, deadline=None)
def test_diff_product_identity(n, rng):
    ps = [mpq(rng.randint(1, 999), 1000) for _ in range(n)]
    built = build_mc_basic(n, ps)
    pol = {s: rng.randint(0, 1) for s in built.bit_states}
    assert check_mc_diff_formula(built, {**built.start_policy, **pol})


def test_diff_identity_topological():
    built = build_mc_topological(4)
    pol = {s: i % 2 for i, s in enumerate(built.bit_states)}
    assert check_mc_diff_formula(built, {**built.start_policy, **pol})


def test_gadgeted_ordering_along_run():
    built = build("mc-difference", 3)
    trace = run(built.mdp, built.start_policy, make_variant("difference", built))
    for pol in trace.policies():
        assert check_mc_diff_formula(built, pol)


# --- growth tables and the family driver ---------------------------------------------


def test_growth_mc_basic_exact():
    table = growth_curve("mc-basic", range(2, 13))
    assert table.min_iterations() == {n: 2**n - 1 for n in range(2, 13)}
    assert table.slope == pytest.approx(1.0, abs=0.05)
    assert table.to_csv() == growth_curve("mc-basic", range(2, 13)).to_csv()


def test_growth_full_rows():
    table = growth_curve("full", range(2, 4))
    assert all(row.iterations >= 2**row.n for row in table.rows)


@pytest.mark.parametrize("family,n", [("simple", 3), ("full", 2), ("mc-basic", 3), ("mc-topological", 3), ("mc-difference", 3), ("reachability", 2)])
def test_verify_family_passes(family, n):
    reports = verify_family(family, n)
    assert reports and all_passed(reports), [r.line() for r in reports if not r]


def test_verify_family_unknown_check():
    with pytest.raises(ValueError):
        verify_family("simple", 2, checks=["nope"])
