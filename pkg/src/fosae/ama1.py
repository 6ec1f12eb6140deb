"""Oracular action model acquisition: one grounded action per observed transition.

Each distinct encoded pair ``(s, t)`` with ``s != t`` becomes an action whose
precondition is the complete assignment ``s`` and whose effect is the
complete assignment ``t``.  The resulting transition graph is exactly the
observed one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .planner import ParsedTask

REQUIREMENTS = "(:requirements :strips :negative-preconditions)"


class ValidationError(ValueError):
    pass


def prop_name(i):
    return f"b{i}"


def action_name(k):
    return f"a{k}"


@dataclass(frozen=True)
class GroundedAction:
    """``pre`` and ``eff`` are full assignments packed as ints (bit i = b<i>)."""

    name: str
    pre: int
    eff: int

    def literals(self, which, n):
        value = self.pre if which == "pre" else self.eff
        return [(i, bool(value >> i & 1)) for i in range(n)]


@dataclass
class GroundedModel:
    num_propositions: int
    actions: list
    init: int
    goal: int

    def __post_init__(self):
        full = (1 << self.num_propositions) - 1
        names = set()
        for a in self.actions:
            if (a.pre | a.eff) & ~full:
                raise ValidationError(f"action {a.name} references propositions beyond {self.num_propositions}")
            if a.name in names:
                raise ValidationError(f"duplicate action name {a.name}")
            names.add(a.name)
        if (self.init | self.goal) & ~full:
            raise ValidationError("init/goal reference propositions beyond the model")

    @property
    def full_mask(self):
        return (1 << self.num_propositions) - 1


def _as_state(value, n, what):
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        value = int(value)
        if value < 0 or value >> n:
            raise ValidationError(f"{what} does not fit in {n} propositions")
        return value
    bits = np.asarray(value, dtype=bool).reshape(-1)
    if bits.size != n:
        raise ValidationError(f"{what} has {bits.size} bits, expected {n}")
    return int(sum(1 << i for i in np.flatnonzero(bits)))


def build_model(log, init, goal, num_propositions=None):
    """Grounded model from a transition log (or an iterable of (pre, suc) ints).

    Duplicate pairs collapse to one action and self-loops are dropped.
    Actions are numbered in first-seen order.
    """
    if num_propositions is None:
        num_propositions = log.num_propositions
    pairs = log.pairs if hasattr(log, "pairs") else list(log)
    n = num_propositions
    actions = []
    seen = set()
    for pre, suc in pairs:
        pre = _as_state(pre, n, "pre-state")
        suc = _as_state(suc, n, "successor state")
        if pre == suc or (pre, suc) in seen:
            continue
        seen.add((pre, suc))
        actions.append(GroundedAction(action_name(len(actions)), pre, suc))
    return GroundedModel(n, actions, _as_state(init, n, "init"), _as_state(goal, n, "goal"))


def to_task(model: GroundedModel, domain_name="fosae", problem_name="fosae-problem"):
    """The model as a planner task, without going through PDDL text."""
    full = model.full_mask
    props = {prop_name(i): i for i in range(model.num_propositions)}
    acts = model.actions
    return ParsedTask(
        props,
        [a.name for a in acts],
        [a.pre for a in acts],
        [~a.pre & full for a in acts],
        [a.eff for a in acts],
        [~a.eff & full for a in acts],
        model.init,
        model.goal,
        ~model.goal & full,
        domain_name,
        problem_name,
    )


def model_from_task(task: ParsedTask):
    """Inverse of :func:`to_task`; requires full-assignment preconditions, effects and goal."""
    n = task.num_propositions
    full = task.mask
    for i in range(n):
        if task.propositions.get(prop_name(i)) != i:
            raise ValidationError(f"proposition {prop_name(i)} is not declared at index {i}")
    actions = []
    for k, name in enumerate(task.action_names):
        if task.pos_pre[k] | task.neg_pre[k] != full or task.add[k] | task.delete[k] != full:
            raise ValidationError(f"action {name} is not a full assignment")
        actions.append(GroundedAction(name, task.pos_pre[k], task.add[k]))
    if task.goal_pos | task.goal_neg != full:
        raise ValidationError("goal is not a full assignment")
    return GroundedModel(n, actions, task.init, task.goal_pos)


def _conjunction_lines(value, n, indent):
    pad = " " * indent
    lines = [f"{pad}(and"]
    for i in range(n):
        lit = f"({prop_name(i)})" if value >> i & 1 else f"(not ({prop_name(i)}))"
        lines.append(f"{pad}  {lit}")
    lines[-1] += ")"
    if n == 0:
        lines[0] += ")"
    return lines


def emit_pddl(model: GroundedModel, domain_name="fosae", problem_name="fosae-problem"):
    """Return ``(domain_text, problem_text)``; byte-deterministic for a given model."""
    n = model.num_propositions
    out = [f"(define (domain {domain_name})", f"  {REQUIREMENTS}", f"  ; {n} propositions, {len(model.actions)} actions"]
    if n:
        out.append("  (:predicates")
        out.extend(f"    ({prop_name(i)})" for i in range(n))
        out[-1] += ")"
    else:
        out.append("  (:predicates)")
    for a in model.actions:
        out.append(f"  (:action {a.name}")
        out.append("    :parameters ()")
        out.append("    :precondition")
        out.extend(_conjunction_lines(a.pre, n, 6))
        out.append("    :effect")
        out.extend(_conjunction_lines(a.eff, n, 6))
        out[-1] += ")"
    out[-1] += ")"
    domain = "\n".join(out) + "\n"

    prob = [f"(define (problem {problem_name})", f"  (:domain {domain_name})"]
    true_props = [i for i in range(n) if model.init >> i & 1]
    if true_props:
        prob.append("  (:init")
        prob.extend(f"    ({prop_name(i)})" for i in true_props)
        prob[-1] += ")"
    else:
        prob.append("  (:init)")
    prob.append("  (:goal")
    prob.extend(_conjunction_lines(model.goal, n, 4))
    prob[-1] += "))"
    problem = "\n".join(prob) + "\n"
    return domain, problem
