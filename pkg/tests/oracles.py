"""Independent reference implementations used as test oracles.

These work on sets of proposition names, never on the planner's bitmasks.
"""

from collections import deque

from fosae.planner import ParsedTask


def random_strips_task(rng, max_props=12, max_actions=40, p_mention=0.3, p_effect=0.12):
    """A random STRIPS task with partial preconditions/effects and a partial goal."""
    n = int(rng.integers(1, max_props + 1))
    m = int(rng.integers(1, max_actions + 1))
    props = {f"p{i}": i for i in range(n)}
    pos_pre, neg_pre, add, delete = [], [], [], []
    for _ in range(m):
        pp = np_ = ad = de = 0
        for i in range(n):
            r = rng.random()
            if r < p_mention / 2:
                pp |= 1 << i
            elif r < p_mention:
                np_ |= 1 << i
            r = rng.random()
            if r < p_effect:
                ad |= 1 << i
            elif r < 2 * p_effect:
                de |= 1 << i
        pos_pre.append(pp)
        neg_pre.append(np_)
        add.append(ad)
        delete.append(de)
    init = int(rng.integers(0, 1 << n))
    gp, gn = _random_goal(rng, n, pos_pre, neg_pre, add, delete, init)
    names = [f"act{k}" for k in range(m)]
    return ParsedTask(props, names, pos_pre, neg_pre, add, delete, init, gp, gn)


def _random_goal(rng, n, pos_pre, neg_pre, add, delete, init):
    """Half the time the endpoint of a random walk, else random literals; never true at init."""
    full = (1 << n) - 1
    for _ in range(100):
        if rng.random() < 0.5:
            state = init
            for _ in range(int(rng.integers(1, 16))):
                options = [k for k in range(len(add))
                           if state & pos_pre[k] == pos_pre[k] and not state & neg_pre[k]]
                if not options:
                    break
                k = options[int(rng.integers(len(options)))]
                state = (state & ~delete[k]) | add[k]
            keep = sum(1 << i for i in range(n) if rng.random() < 0.8)
            gp, gn = state & keep, ~state & full & keep
        else:
            gp = gn = 0
            for i in range(n):
                r = rng.random()
                if r < 0.3:
                    gp |= 1 << i
                elif r < 0.5:
                    gn |= 1 << i
        if not (init & gp == gp and not init & gn):
            return gp, gn
    return gp, gn


def _names(task, mask):
    return frozenset(name for name, i in task.propositions.items() if mask >> i & 1)


class SetInterpreter:
    """Literal-by-literal STRIPS semantics over frozensets of names."""

    def __init__(self, task):
        self.actions = [
            (name, _names(task, task.pos_pre[k]), _names(task, task.neg_pre[k]),
             _names(task, task.add[k]), _names(task, task.delete[k]))
            for k, name in enumerate(task.action_names)
        ]
        self.init = _names(task, task.init)
        self.goal_pos = _names(task, task.goal_pos)
        self.goal_neg = _names(task, task.goal_neg)
        self.task = task

    def applicable(self, state):
        out = []
        for k, (_, pos, neg, _, _) in enumerate(self.actions):
            if all(p in state for p in pos) and not any(p in state for p in neg):
                out.append(k)
        return out

    def apply(self, state, k):
        _, _, _, add, delete = self.actions[k]
        return (state - delete) | add

    def is_goal(self, state):
        return self.goal_pos <= state and not (self.goal_neg & state)

    def to_mask(self, state):
        return sum(1 << self.task.propositions[p] for p in state)

    def bfs_cost(self):
        """Shortest plan length, or None when the goal is unreachable."""
        if self.is_goal(self.init):
            return 0
        dist = {self.init: 0}
        q = deque([self.init])
        while q:
            s = q.popleft()
            for k in self.applicable(s):
                t = self.apply(s, k)
                if t not in dist:
                    dist[t] = dist[s] + 1
                    if self.is_goal(t):
                        return dist[t]
                    q.append(t)
        return None
