"""Independent reference implementations used only by the tests.

``LabelledChain`` applies the PEPA operational rules directly to a system in
which every copy of a component is a separate, labelled sequential process.
It shares nothing with the counting-abstraction engine except the term
dataclasses, so agreement between the two checks the aggregation, the
class enumeration and the generated rate code together.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from pepaflow.syntax import Choice, Constant, Cooperation, Literal, Population, Prefix


def _moves(term, model):
    """(action, rate, next term) for one sequential process."""
    if isinstance(term, Constant):
        return _moves(model.definitions[term.name], model)
    if isinstance(term, Prefix):
        assert isinstance(term.rate, Literal), "oracle handles active rates only"
        return [(term.action, term.rate.value, term.continuation)]
    if isinstance(term, Choice):
        return _moves(term.left, model) + _moves(term.right, model)
    raise TypeError(term)


def _canon(term):
    # Prefix continuations that are constants stay constants; the label of a
    # local state is its term, which is hashable.
    return term


class LabelledChain:
    """Explicit CTMC over labelled copies.

    The system tree keeps each ``P[k]`` as ``k`` separate leaves joined by
    empty cooperation, exactly as the population shorthand abbreviates.
    """

    def __init__(self, model):
        self.model = model
        self.leaf_names: list[str] = []
        self.tree = self._expand(model.system)
        self.start = tuple(Constant(name) for name in self.leaf_names)

    def _expand(self, e):
        if isinstance(e, Population):
            k = e.count.factors[0]
            nodes = []
            for _ in range(k):
                self.leaf_names.append(e.body.name)
                nodes.append(("leaf", len(self.leaf_names) - 1))
            node = nodes[0]
            for other in nodes[1:]:
                node = ("coop", frozenset(), node, other)
            return node
        if isinstance(e, Cooperation):
            return ("coop", e.actions, self._expand(e.left), self._expand(e.right))
        raise TypeError(e)

    def _derive(self, node, state):
        """All (action, rate, {leaf: new term}) of a subtree."""
        if node[0] == "leaf":
            i = node[1]
            return [(a, r, {i: t}) for a, r, t in _moves(state[i], self.model)]
        _, shared, left, right = node
        lt = self._derive(left, state)
        rt = self._derive(right, state)
        out = [m for m in lt if m[0] not in shared] + [m for m in rt if m[0] not in shared]
        for a in shared:
            la = [m for m in lt if m[0] == a]
            ra = [m for m in rt if m[0] == a]
            if not la or not ra:
                continue
            al = sum(m[1] for m in la)
            ar = sum(m[1] for m in ra)
            for _, r1, c1 in la:
                for _, r2, c2 in ra:
                    out.append((a, (r1 / al) * (r2 / ar) * min(al, ar), {**c1, **c2}))
        return out

    def transitions(self, state):
        for a, r, change in self._derive(self.tree, state):
            nxt = list(state)
            for i, t in change.items():
                nxt[i] = _unfold(t)
            yield a, r, tuple(nxt)

    def explore(self, max_states: int = 200_000):
        index = {self.start: 0}
        order = [self.start]
        queue = deque([self.start])
        edges = []
        while queue:
            s = queue.popleft()
            i = index[s]
            for a, r, t in self.transitions(s):
                j = index.get(t)
                if j is None:
                    if len(order) >= max_states:
                        raise RuntimeError("oracle state space too large")
                    j = index[t] = len(order)
                    order.append(t)
                    queue.append(t)
                edges.append((i, j, r, a))
        return order, edges

    def steady_state(self):
        """Dense solve; returns (states, pi, action throughputs)."""
        states, edges = self.explore()
        n = len(states)
        q = np.zeros((n, n))
        tput_rows: dict[str, np.ndarray] = {}
        for i, j, r, a in edges:
            if i != j:
                q[i, j] += r
                q[i, i] -= r
            tput_rows.setdefault(a, np.zeros(n))[i] += r
        a_mat = q.T.copy()
        a_mat[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        pi = np.linalg.solve(a_mat, b)
        return states, pi, {a: float(pi @ v) for a, v in tput_rows.items()}

    def population_key(self, state):
        """Counting abstraction of a labelled state: sorted terms per leaf group."""
        groups: dict[str, list[str]] = {}
        for name, term in zip(self.leaf_names, state):
            groups.setdefault(name, []).append(repr(term))
        return tuple((name, tuple(sorted(v))) for name, v in groups.items())


def _unfold(term):
    # a continuation may be a prefix term itself (anonymous derivative)
    return term


def lumped_state_count(model) -> int:
    chain = LabelledChain(model)
    states, _ = chain.explore()
    return len({chain.population_key(s) for s in states})


def two_state_model_text(think: float = 1.0, complete: float = 2.0, n: int = 1) -> str:
    return f"Think = (think, {think}).Busy;\nBusy = (complete, {complete}).Think;\nsystem = Think[{n}];\n"


def mean_first_passage(q: np.ndarray, start: np.ndarray, targets: np.ndarray) -> float:
    """Mean time to reach ``targets`` from the initial distribution ``start``
    (dense solve of ``-Q_TT m = 1`` over the transient states)."""
    transient = ~targets
    qt = q[np.ix_(transient, transient)]
    m = np.linalg.solve(-qt, np.ones(transient.sum()))
    return float(start[transient] @ m)
