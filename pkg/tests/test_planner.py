import json
import random
from dataclasses import replace
from itertools import combinations

import pytest
from hypothesis import given, settings, strategies as st

from ctxswitch.circuit import Assignment, Circuit, Register, StateDef, Transition, worst_case_drain
from ctxswitch.expr import parse_expr
from ctxswitch.planner import (
    Mode,
    OverheadReport,
    PlanBudgetExceeded,
    PlanError,
    brute_force_plan,
    canonical_plan_bytes,
    dump_plan,
    make_plan,
    parse_plan,
    plan_checkpoints,
    plan_overhead,
    verify_plan,
)
from ctxswitch.randgen import random_circuit


def loop(ids, reg_width=None):
    """Cycle over ``ids`` in order; optionally one register live everywhere."""
    regs = (Register("r", reg_width),) if reg_width else ()
    states = []
    for i, sid in enumerate(ids):
        assigns = ()
        if reg_width:
            assigns = (Assignment("r", parse_expr("r + 1")),)
        states.append(StateDef(sid, assignments=assigns, transitions=(Transition(None, ids[(i + 1) % len(ids)]),)))
    return Circuit("loop", regs, (), (), tuple(states), ids[0])


def enumerate_feasible(c, L):
    pool = [s.id for s in c.states if s.id in c.reachable and not s.halt]
    for k in range(len(pool) + 1):
        for sub in combinations(pool, k):
            d = worst_case_drain(c, sub)
            if all(d[s] <= L for s in pool):
                yield sub


def test_ring3_exact_l2(ring3):
    p = plan_checkpoints(ring3, 2, Mode.EXACT)
    assert p.checkpoints == ("S0",)
    assert p.overhead == OverheadReport(union_bits=8, state_bits=2, max_context_bits=10, checkpoint_count=1)
    assert p.live == {"S0": ("acc",)}
    assert verify_plan(ring3, p) == []


def test_ring3_exact_by_enumeration(ring3):
    feasible = list(enumerate_feasible(ring3, 2))
    best = min(feasible, key=lambda s: (plan_overhead(ring3, s).union_bits, len(s), tuple(sorted(s))))
    assert best == ("S0",)


@pytest.mark.parametrize("mode", list(Mode))
def test_ring3_l0_takes_every_live_state(ring3, mode):
    assert plan_checkpoints(ring3, 0, mode).checkpoints == ("S0", "S1", "S2")


def test_three_cycle_needs_two_checkpoints():
    c = loop(["A", "B", "C"], reg_width=8)
    assert c.liveness == {"A": {"r"}, "B": {"r"}, "C": {"r"}}
    feasible = list(enumerate_feasible(c, 1))
    assert min(len(s) for s in feasible) == 2
    assert ("A", "C") in feasible
    assert plan_checkpoints(c, 1).checkpoints == ("A", "B")
    assert brute_force_plan(c, 1).checkpoints == ("A", "B")


def test_two_state_loop_tie_break():
    c = loop(["A", "B"])
    assert sorted(enumerate_feasible(c, 1)) == [("A",), ("A", "B"), ("B",)]
    assert brute_force_plan(c, 1).checkpoints == ("A",)
    assert plan_checkpoints(c, 1).checkpoints == ("A",)


def test_brute_force_matches_exact_ring3(ring3):
    for L in range(5):
        assert brute_force_plan(ring3, L).objective == plan_checkpoints(ring3, L).objective


def test_brute_force_size_limit():
    c = loop([f"S{i:02d}" for i in range(21)])
    with pytest.raises(PlanError):
        brute_force_plan(c, 3)


def test_overhead_examples(ring3):
    assert plan_overhead(ring3, {"S0"}) == OverheadReport(8, 2, 10, 1)
    assert plan_overhead(ring3, set()) == OverheadReport(0, 2, 2, 0)
    two = plan_overhead(ring3, {"S0", "S1"})
    assert two.union_bits == 8 and two.checkpoint_count == 2


def test_state_bits_minimum_one():
    c = loop(["A"])
    assert plan_overhead(c, {"A"}).state_bits == 1


def test_verify_examples(ring3):
    assert verify_plan(ring3, plan_checkpoints(ring3, 2)) == []
    assert verify_plan(ring3, make_plan(ring3, 2, {"S1"})) == []
    diags = verify_plan(ring3, make_plan(ring3, 1, {"S1"}))
    assert [(d.code, d.where) for d in diags] == [("latency", "S2")]
    p = plan_checkpoints(ring3, 2)
    forged = replace(p, circuit_digest=p.circuit_digest ^ 1)
    assert "digest-mismatch" in [d.code for d in verify_plan(ring3, forged)]


def test_verify_catches_wrong_live_lists(ring3):
    p = plan_checkpoints(ring3, 2)
    bad = replace(p, live={"S0": ("acc", "tmp")})
    assert "live-lists" in [d.code for d in verify_plan(ring3, bad)]


def test_negative_bound_rejected(ring3):
    with pytest.raises(PlanError):
        plan_checkpoints(ring3, -1)


def test_budget_cancels_search():
    c = random_circuit(random.Random(5), n_states=12, n_registers=6)
    with pytest.raises(PlanBudgetExceeded):
        plan_checkpoints(c, 1, budget=3)


def test_plan_file_round_trip(ring3):
    p = plan_checkpoints(ring3, 2)
    assert parse_plan(dump_plan(p)) == p
    doc = json.loads(canonical_plan_bytes(p))
    assert doc["circuit_digest"] == "0xa55f3f47939a20e7"
    assert canonical_plan_bytes(p) == canonical_plan_bytes(plan_checkpoints(ring3, 2))


def test_unreachable_states_never_chosen(ring3):
    orphan = StateDef("S9", transitions=(Transition(None, "S9"),))
    c = replace(ring3, states=ring3.states + (orphan,))
    assert "S9" not in plan_checkpoints(c, 0).checkpoints
    assert verify_plan(c, plan_checkpoints(c, 0)) == []


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 2**32))
def test_planner_properties(seed):
    c = random_circuit(random.Random(seed), max_states=8)
    previous = None
    for L in range(5):
        exact = plan_checkpoints(c, L, Mode.EXACT)
        greedy = plan_checkpoints(c, L, Mode.GREEDY)
        assert verify_plan(c, exact) == []
        assert verify_plan(c, greedy) == []
        assert exact.objective == brute_force_plan(c, L).objective
        assert exact.objective[:2] <= greedy.objective[:2]
        if previous is not None:
            assert exact.objective[:2] <= previous[:2]
        previous = exact.objective
        if L == 0:
            expected = {s.id for s in c.states if s.id in c.reachable and not s.halt}
            assert set(exact.checkpoints) == expected
        o = exact.overhead
        assert o.max_context_bits <= o.union_bits + o.state_bits
