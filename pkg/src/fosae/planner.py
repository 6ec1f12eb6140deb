"""Propositional STRIPS: a PDDL-subset parser and blind breadth-first search.

States are python ints used as bitsets (bit ``i`` = proposition ``i``).
Actions carry four masks: positive / negative preconditions, add and
delete effects.  Successor generation groups actions by the set of
propositions their precondition mentions, so a state is matched against
each group with one dict lookup; for full-assignment preconditions this is
a single hash probe regardless of how many actions the task has.
"""

from __future__ import annotations

import copy
import sys
import time
from collections import deque
from dataclasses import dataclass, field

DEFAULT_BUDGET_MB = 4096
SUPPORTED_REQUIREMENTS = (":strips", ":negative-preconditions")


class PlanningError(Exception):
    pass


class PddlSyntaxError(PlanningError):
    def __init__(self, message, line, column):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class UnknownPredicateError(PlanningError):
    pass


class DuplicateActionError(PlanningError):
    pass


class ResourceError(PlanningError):
    """Search exceeded its memory budget; ``stats`` holds the partial counts."""

    def __init__(self, message, stats):
        super().__init__(message)
        self.stats = stats


@dataclass
class ParsedTask:
    propositions: dict  # name -> index
    action_names: list
    pos_pre: list
    neg_pre: list
    add: list
    delete: list
    init: int
    goal_pos: int
    goal_neg: int
    domain_name: str = "domain"
    problem_name: str = "problem"
    _groups: list | None = field(default=None, repr=False, compare=False)
    _by_name: dict | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        full = self.mask
        for i, name in enumerate(self.action_names):
            if self.pos_pre[i] & self.neg_pre[i]:
                raise PlanningError(f"action {name}: contradictory precondition")
            if self.add[i] & self.delete[i]:
                raise PlanningError(f"action {name}: proposition both added and deleted")
            for m in (self.pos_pre[i], self.neg_pre[i], self.add[i], self.delete[i]):
                if m & ~full:
                    raise PlanningError(f"action {name}: mask exceeds {self.num_propositions} propositions")
        if (self.init | self.goal_pos | self.goal_neg) & ~full:
            raise PlanningError("init/goal mentions undeclared propositions")

    @property
    def num_propositions(self):
        return len(self.propositions)

    @property
    def mask(self):
        return (1 << len(self.propositions)) - 1

    @property
    def num_actions(self):
        return len(self.action_names)

    def with_problem(self, init, goal_pos, goal_neg):
        """Same actions (and successor index), different init and goal."""
        if (init | goal_pos | goal_neg) & ~self.mask:
            raise PlanningError("init/goal mentions undeclared propositions")
        self._index()
        other = copy.copy(self)
        other.init, other.goal_pos, other.goal_neg = init, goal_pos, goal_neg
        return other

    def action_index(self, name):
        if self._by_name is None:
            self._by_name = {n: i for i, n in enumerate(self.action_names)}
        return self._by_name.get(name)

    def is_goal(self, state):
        return state & self.goal_pos == self.goal_pos and not state & self.goal_neg

    def apply(self, state, action):
        return (state & ~self.delete[action]) | self.add[action]

    def _index(self):
        if self._groups is None:
            groups = {}
            for i in range(len(self.action_names)):
                mentioned = self.pos_pre[i] | self.neg_pre[i]
                groups.setdefault(mentioned, {}).setdefault(self.pos_pre[i], []).append(i)
            self._groups = list(groups.items())
        return self._groups

    def applicable(self, state):
        """Indices of applicable actions, in ascending order."""
        groups = self._index()
        if len(groups) == 1:
            mentioned, table = groups[0]
            return list(table.get(state & mentioned, ()))
        out = []
        for mentioned, table in groups:
            out.extend(table.get(state & mentioned, ()))
        out.sort()
        return out


def applicable(task: ParsedTask, state):
    return task.applicable(state)


# ---------------------------------------------------------------------------
# Parsing


def _tokens(text):
    """Yield (token, line, column); tokens are '(', ')' or lowercase atoms."""
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line, col, i = line + 1, 1, i + 1
            continue
        if ch.isspace():
            i, col = i + 1, col + 1
            continue
        if ch == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch in "()":
            yield ch, line, col
            i, col = i + 1, col + 1
            continue
        start = i
        while i < n and not text[i].isspace() and text[i] not in "();":
            i += 1
        yield text[start:i].lower(), line, col
        col += i - start


class _Reader:
    def __init__(self, text):
        self._it = _tokens(text)
        self._end = (1, 1)
        self._peek = None
        self._advance()

    def _advance(self):
        try:
            self._peek = next(self._it)
            self._end = (self._peek[1], self._peek[2] + len(self._peek[0]))
        except StopIteration:
            self._peek = None

    def peek(self):
        return None if self._peek is None else self._peek[0]

    def position(self):
        return self._end if self._peek is None else self._peek[1:]

    def fail(self, expected):
        got = "end of input" if self._peek is None else repr(self._peek[0])
        raise PddlSyntaxError(f"expected {expected}, got {got}", *self.position())

    def take(self, expected=None, what=None):
        if self._peek is None or (expected is not None and self._peek[0] != expected):
            self.fail(repr(expected) if expected else what or "token")
        tok = self._peek[0]
        self._advance()
        return tok

    def name(self, what="name"):
        if self._peek is None or self._peek[0] in "()" or self._peek[0].startswith(":"):
            self.fail(what)
        return self.take()

    def at_eof(self):
        return self._peek is None


def _literal(r: _Reader, props):
    """``(name)`` or ``(not (name))`` -> (index, positive)."""
    r.take("(")
    positive = True
    if r.peek() == "not":
        r.take()
        r.take("(")
        positive = False
    line, col = r.position()
    name = r.name("proposition name")
    if name not in props:
        raise UnknownPredicateError(f"unknown predicate {name!r} (line {line}, column {col})")
    if r.peek() != ")":
        r.fail("')' (only 0-ary predicates are supported)")
    r.take(")")
    if not positive:
        r.take(")")
    return props[name], positive


def _conjunction(r: _Reader, props):
    """A literal or ``(and literal*)``; returns (positive mask, negative mask)."""
    pos = neg = 0
    r.take("(")
    if r.peek() == "and":
        r.take()
        while r.peek() == "(":
            i, positive = _literal(r, props)
            if positive:
                pos |= 1 << i
            else:
                neg |= 1 << i
        r.take(")")
        return pos, neg
    # single literal: re-enter with the opening paren already consumed
    positive = True
    if r.peek() == "not":
        r.take()
        r.take("(")
        positive = False
    line, col = r.position()
    name = r.name("proposition name")
    if name not in props:
        raise UnknownPredicateError(f"unknown predicate {name!r} (line {line}, column {col})")
    r.take(")")
    if not positive:
        r.take(")")
    i = props[name]
    return (1 << i, 0) if positive else (0, 1 << i)


def _parse_domain(text):
    r = _Reader(text)
    r.take("(")
    r.take("define")
    r.take("(")
    r.take("domain")
    domain_name = r.name("domain name")
    r.take(")")
    props = {}
    names, pos_pre, neg_pre, add, delete = [], [], [], [], []
    while r.peek() == "(":
        r.take("(")
        line, col = r.position()
        section = r.take(what="section keyword")
        if section == ":requirements":
            while r.peek() not in (")", None):
                line, col = r.position()
                req = r.take()
                if req not in SUPPORTED_REQUIREMENTS:
                    raise PddlSyntaxError(f"unsupported requirement {req}", line, col)
            r.take(")")
        elif section == ":predicates":
            while r.peek() == "(":
                r.take("(")
                pline, pcol = r.position()
                name = r.name("predicate name")
                if r.peek() != ")":
                    r.fail("')' (only 0-ary predicates are supported)")
                r.take(")")
                if name in props:
                    raise PddlSyntaxError(f"duplicate predicate {name}", pline, pcol)
                props[name] = len(props)
            r.take(")")
        elif section == ":action":
            aline, acol = r.position()
            name = r.name("action name")
            if name in names:
                raise DuplicateActionError(f"duplicate action {name!r} (line {aline}, column {acol})")
            pre = (0, 0)
            eff = (0, 0)
            while r.peek() not in (")", None):
                kline, kcol = r.position()
                key = r.take()
                if key == ":parameters":
                    r.take("(")
                    r.take(")", what="')' (actions must be parameter-free)")
                elif key == ":precondition":
                    pre = _conjunction(r, props)
                elif key == ":effect":
                    eff = _conjunction(r, props)
                else:
                    raise PddlSyntaxError(f"unsupported action field {key}", kline, kcol)
            r.take(")")
            names.append(name)
            pos_pre.append(pre[0])
            neg_pre.append(pre[1])
            add.append(eff[0])
            delete.append(eff[1])
        else:
            raise PddlSyntaxError(f"unsupported domain section {section}", line, col)
    r.take(")")
    if not r.at_eof():
        r.fail("end of input")
    return domain_name, props, names, pos_pre, neg_pre, add, delete


def _parse_problem(text, props, domain_name):
    r = _Reader(text)
    r.take("(")
    r.take("define")
    r.take("(")
    r.take("problem")
    problem_name = r.name("problem name")
    r.take(")")
    init = goal_pos = goal_neg = 0
    while r.peek() == "(":
        r.take("(")
        line, col = r.position()
        section = r.take(what="section keyword")
        if section == ":domain":
            dline, dcol = r.position()
            name = r.name("domain name")
            if name != domain_name:
                raise PddlSyntaxError(f"problem is for domain {name!r}, not {domain_name!r}", dline, dcol)
            r.take(")")
        elif section == ":init":
            while r.peek() == "(":
                i, positive = _literal(r, props)
                if not positive:
                    raise PddlSyntaxError("negative literal in :init", line, col)
                init |= 1 << i
            r.take(")")
        elif section == ":goal":
            goal_pos, goal_neg = _conjunction(r, props)
            r.take(")")
        else:
            raise PddlSyntaxError(f"unsupported problem section {section}", line, col)
    r.take(")")
    if not r.at_eof():
        r.fail("end of input")
    return problem_name, init, goal_pos, goal_neg


def parse_pddl(domain_text, problem_text):
    """Parse a propositional STRIPS domain/problem pair into bitmask form."""
    domain_name, props, names, pos_pre, neg_pre, add, delete = _parse_domain(domain_text)
    problem_name, init, goal_pos, goal_neg = _parse_problem(problem_text, props, domain_name)
    return ParsedTask(props, names, pos_pre, neg_pre, add, delete, init, goal_pos, goal_neg,
                      domain_name, problem_name)


# ---------------------------------------------------------------------------
# Search


@dataclass
class SearchResult:
    plan: list | None  # action names; None when unsolvable
    expanded: int
    generated: int
    seconds: float
    expanded_states: list | None = None

    @property
    def solved(self):
        return self.plan is not None

    @property
    def cost(self):
        return None if self.plan is None else len(self.plan)


def _node_bytes(task):
    # dict slot + parent tuple + deque slot + the int itself
    return sys.getsizeof(task.mask) + 160


def search(task: ParsedTask, budget_mb=DEFAULT_BUDGET_MB, trace=False):
    """Blind breadth-first search (uniform cost 1): a shortest plan or exhaustion.

    Raises :class:`ResourceError` when the estimated memory of the visited
    set exceeds ``budget_mb``.
    """
    started = time.perf_counter()
    expanded = generated = 0
    traced = [] if trace else None
    init = task.init
    if task.is_goal(init):
        return SearchResult([], 0, 0, time.perf_counter() - started, traced)
    limit = budget_mb * 1024 * 1024 // _node_bytes(task)
    parent = {init: None}
    frontier = deque([init])
    add, delete = task.add, task.delete
    goal_pos, goal_neg = task.goal_pos, task.goal_neg
    while frontier:
        state = frontier.popleft()
        expanded += 1
        if trace:
            traced.append(state)
        for a in task.applicable(state):
            nxt = (state & ~delete[a]) | add[a]
            generated += 1
            if nxt in parent:
                continue
            parent[nxt] = (state, a)
            if nxt & goal_pos == goal_pos and not nxt & goal_neg:
                plan = []
                node = nxt
                while parent[node] is not None:
                    node, act = parent[node]
                    plan.append(task.action_names[act])
                plan.reverse()
                return SearchResult(plan, expanded, generated, time.perf_counter() - started, traced)
            frontier.append(nxt)
        if len(parent) > limit:
            stats = {"expanded": expanded, "generated": generated, "stored": len(parent),
                     "seconds": time.perf_counter() - started}
            raise ResourceError(f"search exceeded the {budget_mb} MiB budget", stats)
    return SearchResult(None, expanded, generated, time.perf_counter() - started, traced)


@dataclass
class Validation:
    ok: bool
    failed_step: int | None = None
    reason: str = ""
    final_state: int | None = None


def validate_plan(task: ParsedTask, plan):
    """Simulate ``plan`` (action names) from init; report the first failing step.

    ``failed_step == len(plan)`` means every action applied but the goal
    does not hold at the end.
    """
    state = task.init
    for step, name in enumerate(plan):
        a = task.action_index(name)
        if a is None:
            return Validation(False, step, f"unknown action {name!r}", state)
        if state & task.pos_pre[a] != task.pos_pre[a] or state & task.neg_pre[a]:
            return Validation(False, step, f"action {name} not applicable", state)
        state = task.apply(state, a)
    if not task.is_goal(state):
        return Validation(False, len(plan), "goal not satisfied", state)
    return Validation(True, None, "", state)


def format_plan(plan):
    """Plan file text: one action per line and a ``; cost = K`` trailer."""
    return "".join(f"{name}\n" for name in plan) + f"; cost = {len(plan)}\n"


def read_plan(text):
    return [line.strip() for line in text.splitlines() if line.strip() and not line.lstrip().startswith(";")]
