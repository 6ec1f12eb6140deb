"""PDDL subset parser, successor generation, breadth-first search and plan validation."""

from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fosae import ama1
from fosae.planner import (
    DuplicateActionError,
    ParsedTask,
    PddlSyntaxError,
    PlanningError,
    ResourceError,
    UnknownPredicateError,
    applicable,
    format_plan,
    parse_pddl,
    read_plan,
    search,
    validate_plan,
)

from oracles import SetInterpreter, random_strips_task

GOLDEN = Path(__file__).parent / "golden"

DOMAIN = """\
; hand-written, partial preconditions
(define (domain toy)
  (:requirements :strips :negative-preconditions)
  (:predicates (p) (q) (r))
  (:action set-p
    :parameters ()
    :precondition (not (p))
    :effect (p))
  (:action p-to-q
    :parameters ()
    :precondition (and (p) (not (q)))
    :effect (and (q) (not (p))))
  (:action finish
    :parameters ()
    :precondition (and (q))
    :effect (and (r))))
"""

PROBLEM = """\
(define (problem toy-1)
  (:domain toy)
  (:init)
  (:goal (and (r) (not (p)))))
"""


def toy():
    return parse_pddl(DOMAIN, PROBLEM)


# ---------------------------------------------------------------- parsing


def test_parse_hand_written_domain():
    task = toy()
    assert task.propositions == {"p": 0, "q": 1, "r": 2}
    assert task.action_names == ["set-p", "p-to-q", "finish"]
    assert (task.pos_pre[1], task.neg_pre[1], task.add[1], task.delete[1]) == (0b001, 0b010, 0b010, 0b001)
    assert (task.init, task.goal_pos, task.goal_neg) == (0, 0b100, 0b001)
    assert (task.domain_name, task.problem_name) == ("toy", "toy-1")


def test_parse_golden_tiny():
    task = parse_pddl((GOLDEN / "tiny_domain.pddl").read_text(), (GOLDEN / "tiny_problem.pddl").read_text())
    assert task.num_propositions == 1 and task.num_actions == 1
    assert search(task).plan == ["a0"]


def test_truncated_domain_is_syntax_error_at_eof():
    with pytest.raises(PddlSyntaxError) as exc:
        parse_pddl("(define (domain", PROBLEM)
    assert "end of input" in str(exc.value)
    assert (exc.value.line, exc.value.column) == (1, 16)


def test_syntax_error_reports_line_and_column():
    bad = DOMAIN.replace("(:action finish", "(:action finish oops")
    with pytest.raises(PddlSyntaxError) as exc:
        parse_pddl(bad, PROBLEM)
    assert (exc.value.line, exc.value.column) == (13, 19)


@pytest.mark.parametrize("text, error", [
    (DOMAIN.replace(":negative-preconditions", ":typing"), PddlSyntaxError),
    (DOMAIN.replace("(and (r))", "(and (s))"), UnknownPredicateError),
    (DOMAIN.replace("(:action finish", "(:action set-p"), DuplicateActionError),
    (DOMAIN.replace("(:predicates (p)", "(:predicates (p ?x)"), PddlSyntaxError),
    (DOMAIN.replace(":parameters ()\n    :precondition (not (p))", ":parameters (?x)\n    :precondition (not (p))"),
     PddlSyntaxError),
    (DOMAIN + "(extra)", PddlSyntaxError),
])
def test_rejected_constructs(text, error):
    with pytest.raises(error):
        parse_pddl(text, PROBLEM)


def test_problem_domain_mismatch_and_negative_init():
    with pytest.raises(PddlSyntaxError):
        parse_pddl(DOMAIN, PROBLEM.replace("(:domain toy)", "(:domain other)"))
    with pytest.raises(PddlSyntaxError):
        parse_pddl(DOMAIN, PROBLEM.replace("(:init)", "(:init (not (p)))"))


def test_contradictory_action_rejected():
    with pytest.raises(PlanningError):
        ParsedTask({"p": 0}, ["x"], [1], [1], [0], [0], 0, 0, 0)
    with pytest.raises(PlanningError):
        ParsedTask({"p": 0}, ["x"], [0], [0], [1], [1], 0, 0, 0)


# ---------------------------------------------------------------- applicability


def test_empty_state_blocks_positive_precondition():
    task = ParsedTask({"b0": 0}, ["a0"], [1], [0], [0], [0], 0, 0, 0)
    assert applicable(task, 0) == []
    assert applicable(task, 1) == [0]


def test_applicable_matches_interpreter_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        task = random_strips_task(rng)
        oracle = SetInterpreter(task)
        state = int(rng.integers(0, 1 << task.num_propositions))
        names = frozenset(n for n, i in task.propositions.items() if state >> i & 1)
        assert applicable(task, state) == oracle.applicable(names)


def test_ama1_applicability_is_exact_state_match():
    rng = np.random.default_rng(1)
    pairs = [(int(a), int(b)) for a, b in rng.integers(0, 64, size=(80, 2))]
    task = ama1.to_task(ama1.build_model(pairs, 0, 0, 6))
    for state in range(64):
        for k in task.applicable(state):
            assert task.pos_pre[k] == state


# ---------------------------------------------------------------- search


def test_goal_at_init_gives_empty_plan():
    task = toy().with_problem(0b100, 0b100, 0)
    result = search(task)
    assert result.plan == [] and result.cost == 0


def test_toy_plan():
    result = search(toy())
    assert result.plan == ["set-p", "p-to-q", "finish"]
    assert validate_plan(toy(), result.plan).ok


def test_three_bit_ama1_toy():
    model = ama1.build_model([(0b000, 0b001), (0b001, 0b011)], 0b000, 0b011, 3)
    result = search(ama1.to_task(model))
    assert result.plan == ["a0", "a1"] and result.cost == 2


def test_unsolvable_exhausts():
    task = toy().with_problem(0, 0b100, 0b010)  # r needs q, and q is never deleted
    result = search(task)
    assert not result.solved and result.cost is None
    assert result.expanded == len({0b000, 0b001, 0b010, 0b011, 0b110, 0b111})


def test_budget_raises_resource_error_with_stats():
    n = 16
    props = {f"b{i}": i for i in range(n)}
    # every bit toggles freely; the goal asks for b15 both true and false
    names, pp, npre, add, dele = [], [], [], [], []
    for i in range(n):
        names += [f"on{i}", f"off{i}"]
        pp += [0, 1 << i]
        npre += [1 << i, 0]
        add += [1 << i, 0]
        dele += [0, 1 << i]
    task = ParsedTask(props, names, pp, npre, add, dele, 0, 0, 0).with_problem(0, 1 << 15, 1 << 15)
    with pytest.raises(ResourceError) as exc:
        search(task, budget_mb=1)
    assert exc.value.stats["expanded"] > 0 and exc.value.stats["stored"] > 0


def test_random_tasks_optimal_against_bfs_oracle():
    rng = np.random.default_rng(2)
    for _ in range(100):
        task = random_strips_task(rng)
        oracle = SetInterpreter(task).bfs_cost()
        result = search(task)
        assert result.cost == oracle
        if result.solved:
            assert validate_plan(task, result.plan).ok


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_search_closed_set_and_determinism(seed):
    task = random_strips_task(np.random.default_rng(seed), max_props=8, max_actions=20)
    a = search(task, trace=True)
    b = search(task, trace=True)
    assert a.plan == b.plan
    assert len(a.expanded_states) == len(set(a.expanded_states))  # nothing expanded twice
    if a.solved:
        assert validate_plan(task, a.plan).ok


# ---------------------------------------------------------------- validation


def test_empty_plan_validates_iff_init_is_goal():
    assert not validate_plan(toy(), []).ok
    assert validate_plan(toy().with_problem(0b100, 0b100, 0), []).ok


def test_mutated_plan_fails_at_first_inapplicable_step():
    plan = search(toy()).plan
    swapped = [plan[1], plan[0], plan[2]]
    v = validate_plan(toy(), swapped)
    assert not v.ok and v.failed_step == 0
    v = validate_plan(toy(), plan[:2])
    assert not v.ok and v.failed_step == 2 and "goal" in v.reason
    v = validate_plan(toy(), ["set-p", "nope"])
    assert not v.ok and v.failed_step == 1


def test_plan_file_roundtrip():
    text = format_plan(["a3", "a1"])
    assert text == "a3\na1\n; cost = 2\n"
    assert read_plan(text) == ["a3", "a1"]
