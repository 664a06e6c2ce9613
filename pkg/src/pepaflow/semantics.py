"""Population-level operational semantics.

A :class:`CompiledModel` flattens a :class:`~pepaflow.syntax.ConcreteModel`
into a counting abstraction: one integer (or real, for the fluid limit) per
local state of each population leaf.  Every way a set of local transitions
can fire together is a :class:`TransitionClass`.

Rates follow the usual apparent-rate algebra: apparent rates add within a
population and across interleaving, and a shared action fires at the
minimum of the two sides.  For one combined transition with component
rates ``r_l``/``r_r`` and side apparent rates ``A_l``/``A_r``::

    rate = (r_l / A_l) * (r_r / A_r) * min(A_l, A_r) = r_l * r_r / max(A_l, A_r)

so a class rate is the product of its local rates times ``1/max(A_l, A_r)``
at every cooperation node it synchronises on.  That product form is what
:meth:`CompiledModel.rates` evaluates; :meth:`CompiledModel.apparent_rate`
and :meth:`CompiledModel.reference_rate` compute the same quantities directly from
the cooperation tree and serve as the reference.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .syntax import (
    Choice,
    ConcreteModel,
    Constant,
    Cooperation,
    Literal,
    NamedRate,
    Passive,
    Population,
    Prefix,
    validate_model,
)


class SemanticsError(ValueError):
    pass


def local_moves(term, model) -> list[tuple[str, object, object]]:
    """``(action, rate, continuation)`` for every prefix enabled in ``term``."""
    if isinstance(term, Prefix):
        return [(term.action, term.rate, term.continuation)]
    if isinstance(term, Choice):
        return local_moves(term.left, model) + local_moves(term.right, model)
    if isinstance(term, Constant):
        return local_moves(model.body(term.name), model)
    raise SemanticsError(f"not a sequential term: {term!r}")


@dataclass(frozen=True)
class LocalState:
    group: str
    label: str
    index: int  # position in the global state vector

    def __str__(self):
        return self.label


@dataclass(frozen=True)
class LocalTransition:
    action: str
    rate: float  # passive weight when ``passive``
    passive: bool
    src: int
    dst: int
    group: int


@dataclass
class Group:
    """One population leaf of the system equation."""

    name: str
    component: str
    count: int
    offset: int
    labels: list[str]
    terms: list
    transitions: list[LocalTransition] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def indices(self) -> range:
        return range(self.offset, self.offset + self.size)


def derivatives(initial: str, model) -> tuple[list, list[str], list[tuple[str, object, int, int]]]:
    """Local states reachable from constant ``initial``, in discovery order.

    Named constants keep their name; anonymous intermediate terms are
    labelled ``<root>#<k>`` after the nearest named ancestor.
    """
    start = Constant(initial)
    terms, labels = [start], [initial]
    index = {start: 0}
    roots = {0: initial}
    counters: dict[str, int] = {}
    moves = []
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for action, rate, nxt in local_moves(terms[i], model):
            if nxt not in index:
                index[nxt] = len(terms)
                terms.append(nxt)
                if isinstance(nxt, Constant):
                    label = nxt.name
                    roots[index[nxt]] = nxt.name
                else:
                    root = roots[i]
                    counters[root] = counters.get(root, 0) + 1
                    label = f"{root}#{counters[root]}"
                    roots[index[nxt]] = root
                labels.append(label)
                queue.append(index[nxt])
            moves.append((action, rate, i, index[nxt]))
    return terms, labels, moves


# -- cooperation tree --------------------------------------------------------------


@dataclass
class Leaf:
    group: int
    alphabet: frozenset = frozenset()
    passive: frozenset = frozenset()


@dataclass
class Node:
    id: int
    left: object
    right: object
    actions: frozenset
    alphabet: frozenset = frozenset()
    passive: frozenset = frozenset()


@dataclass(frozen=True)
class TransitionClass:
    """A combination of local transitions that fire together.

    ``locals`` index :attr:`CompiledModel.local`; ``syncs`` are the
    ``(node id, action)`` cooperation points the class passes through.
    """

    id: int
    action: str
    locals: tuple[int, ...]
    syncs: tuple[tuple[int, str], ...]
    consumes: tuple[int, ...]
    produces: tuple[int, ...]

    @property
    def moves(self) -> tuple[tuple[int, int], ...]:
        return tuple(zip(self.consumes, self.produces))

    def delta(self, n: int) -> np.ndarray:
        d = np.zeros(n)
        for s, t in self.moves:
            d[s] -= 1
            d[t] += 1
        return d


class CompiledModel:
    """Counting-abstraction view of a concrete model, shared by all engines."""

    def __init__(self, model: ConcreteModel, check: bool = True):
        if check:
            report = validate_model(model)
            if not report.ok:
                raise SemanticsError("; ".join(map(str, report)))
        self.model = model
        self.groups: list[Group] = []
        self.local: list[LocalTransition] = []
        self._next_node = 0
        self.tree = self._build_tree(model.system)
        self.n_vars = sum(g.size for g in self.groups)
        self.states = [
            LocalState(g.name, label, g.offset + i) for g in self.groups for i, label in enumerate(g.labels)
        ]
        self._nodes: dict[int, Node] = {}
        self._collect_nodes(self.tree)
        self.classes = self._enumerate_classes()
        self.actions = sorted({t.action for t in self.local})
        self._rates, self._drift = self._generate()

    # construction

    def _build_tree(self, expr):
        if isinstance(expr, Population):
            count = expr.count.factors
            if len(count) != 1 or not isinstance(count[0], int):
                raise SemanticsError(f"population of {expr.body.name} is not bound to an integer")
            gi = len(self.groups)
            offset = sum(g.size for g in self.groups)
            terms, labels, moves = derivatives(expr.body.name, self.model)
            taken = {g.name for g in self.groups}
            name = expr.body.name
            k = 2
            while name in taken:
                name = f"{expr.body.name}@{k}"
                k += 1
            group = Group(name, expr.body.name, count[0], offset, labels, terms)
            for action, rate, s, t in moves:
                if isinstance(rate, NamedRate):
                    raise SemanticsError(f"unbound rate {rate.name}")
                passive = isinstance(rate, Passive)
                value = rate.weight if passive else rate.value
                lt = LocalTransition(action, float(value), passive, offset + s, offset + t, gi)
                group.transitions.append(lt)
                self.local.append(lt)
            self.groups.append(group)
            active = {t.action for t in group.transitions if not t.passive}
            passive = {t.action for t in group.transitions if t.passive}
            if active & passive:
                raise SemanticsError(f"{name} mixes passive and active rates for {sorted(active & passive)}")
            return Leaf(gi, frozenset(active | passive), frozenset(passive))
        if isinstance(expr, Cooperation):
            left = self._build_tree(expr.left)
            right = self._build_tree(expr.right)
            node = Node(self._next_node, left, right, frozenset(expr.actions))
            self._next_node += 1
            passive = set()
            for a in left.alphabet | right.alphabet:
                lp, rp = a in left.passive, a in right.passive
                la, ra = a in left.alphabet, a in right.alphabet
                if a in node.actions:
                    if lp and rp:
                        raise SemanticsError(f"both cooperands passive on action {a}")
                    continue
                if la and ra and lp != rp:
                    raise SemanticsError(f"action {a} is passive on one side of an interleaving only")
                if lp or rp:
                    passive.add(a)
            node.alphabet = left.alphabet | right.alphabet
            node.passive = frozenset(passive)
            return node
        raise SemanticsError(f"not a system term: {expr!r}")

    def _collect_nodes(self, t):
        if isinstance(t, Node):
            self._nodes[t.id] = t
            self._collect_nodes(t.left)
            self._collect_nodes(t.right)

    def _partials(self, t):
        """action -> list of (locals, syncs, passive) reaching the top of ``t``."""
        out: dict[str, list] = {}
        if isinstance(t, Leaf):
            for k, lt in enumerate(self.local):
                if lt.group == t.group:
                    out.setdefault(lt.action, []).append(((k,), (), lt.passive))
            return out
        left, right = self._partials(t.left), self._partials(t.right)
        for a in sorted(set(left) | set(right)):
            if a in t.actions:
                combos = []
                for ll, ls, lp in left.get(a, []):
                    for rl, rs, rp in right.get(a, []):
                        combos.append((ll + rl, ls + rs + ((t.id, a),), lp and rp))
                if combos:
                    out[a] = combos
            else:
                out[a] = left.get(a, []) + right.get(a, [])
        return out

    def _enumerate_classes(self) -> list[TransitionClass]:
        classes = []
        for a, partials in sorted(self._partials(self.tree).items()):
            for locs, syncs, passive in partials:
                if passive:
                    raise SemanticsError(f"passive action {a} is never synchronised with an active partner")
                classes.append(
                    TransitionClass(
                        len(classes),
                        a,
                        locs,
                        syncs,
                        tuple(self.local[k].src for k in locs),
                        tuple(self.local[k].dst for k in locs),
                    )
                )
        return classes

    # reference evaluation (direct recursion over the tree)

    def _local_rate(self, k: int, x) -> float:
        lt = self.local[k]
        return lt.rate * max(float(x[lt.src]), 0.0)

    def _apparent(self, t, action: str, x) -> float:
        if isinstance(t, Leaf):
            return sum(self._local_rate(k, x) for k, lt in enumerate(self.local) if lt.group == t.group and lt.action == action)
        if action not in t.alphabet:
            return 0.0
        al = self._apparent(t.left, action, x)
        ar = self._apparent(t.right, action, x)
        if action in t.actions:
            if action in t.left.passive:
                return ar
            if action in t.right.passive:
                return al
            return min(al, ar)
        return al + ar

    def apparent_rate(self, x, action: str, node: int | None = None) -> float:
        """Apparent rate of ``action`` in state ``x`` at a cooperation node
        (by id) or, by default, the whole system."""
        t = self.tree if node is None else self._nodes[node]
        return self._apparent(t, action, x)

    def node(self, node_id: int) -> Node:
        return self._nodes[node_id]

    def reference_rate(self, cls: TransitionClass, x) -> float:
        rate = 1.0
        for k in cls.locals:
            rate *= self._local_rate(k, x)
        for node_id, a in cls.syncs:
            t = self._nodes[node_id]
            al = self._apparent(t.left, a, x)
            ar = self._apparent(t.right, a, x)
            if a in t.left.passive:
                rate = rate / al if al > 0 else 0.0
            elif a in t.right.passive:
                rate = rate / ar if ar > 0 else 0.0
            else:
                m = max(al, ar)
                rate = rate / m if m > 0 else 0.0
        return rate

    # generated fast path

    def _generate(self):
        lines_common = []
        for i in range(self.n_vars):
            lines_common.append(f"    x{i} = x[{i}]")
            lines_common.append(f"    if x{i} < 0.0: x{i} = 0.0")
        for k, lt in enumerate(self.local):
            lines_common.append(f"    v{k} = {lt.rate!r} * x{lt.src}")

        memo: dict[tuple, str] = {}

        def apparent(t, a) -> str:
            key = (id(t), a)
            if key in memo:
                return memo[key]
            if isinstance(t, Leaf):
                terms = [f"v{k}" for k, lt in enumerate(self.local) if lt.group == t.group and lt.action == a]
                expr = " + ".join(terms) if terms else "0.0"
            elif a not in t.alphabet:
                expr = "0.0"
            else:
                al, ar = apparent(t.left, a), apparent(t.right, a)
                if a in t.actions:
                    if a in t.left.passive:
                        expr = ar
                    elif a in t.right.passive:
                        expr = al
                    else:
                        expr = f"({al} if {al} < {ar} else {ar})"
                else:
                    expr = f"{al} + {ar}"
            name = f"A{len(memo)}"
            lines_common.append(f"    {name} = {expr}")
            memo[key] = name
            return name

        factors: dict[tuple[int, str], str] = {}
        for cls in self.classes:
            for node_id, a in cls.syncs:
                if (node_id, a) in factors:
                    continue
                t = self._nodes[node_id]
                al, ar = apparent(t.left, a), apparent(t.right, a)
                f = f"f{len(factors)}"
                if a in t.left.passive:
                    lines_common.append(f"    {f} = 1.0 / {al} if {al} > 0.0 else 0.0")
                elif a in t.right.passive:
                    lines_common.append(f"    {f} = 1.0 / {ar} if {ar} > 0.0 else 0.0")
                else:
                    lines_common.append(f"    m = {al} if {al} > {ar} else {ar}")
                    lines_common.append(f"    {f} = 1.0 / m if m > 0.0 else 0.0")
                factors[(node_id, a)] = f
        for cls in self.classes:
            parts = [f"v{k}" for k in cls.locals] + [factors[s] for s in cls.syncs]
            lines_common.append(f"    r{cls.id} = {' * '.join(parts)}")

        rate_src = ["def rates(x):", *lines_common]
        rate_src.append("    return [" + ", ".join(f"r{c.id}" for c in self.classes) + "]")

        inflow: list[list[str]] = [[] for _ in range(self.n_vars)]
        outflow: list[list[str]] = [[] for _ in range(self.n_vars)]
        for cls in self.classes:
            for s, d in cls.moves:
                if s != d:
                    outflow[s].append(f"r{cls.id}")
                    inflow[d].append(f"r{cls.id}")
        drift_src = ["def drift(x):", *lines_common]
        exprs = []
        for i in range(self.n_vars):
            expr = " + ".join(inflow[i]) or "0.0"
            if outflow[i]:
                expr = f"({expr}) - ({' + '.join(outflow[i])})"
            exprs.append(expr)
        drift_src.append("    return [" + ", ".join(exprs) + "]")

        namespace: dict = {}
        exec(compile("\n".join(rate_src), "<pepaflow-rates>", "exec"), namespace)
        exec(compile("\n".join(drift_src), "<pepaflow-drift>", "exec"), namespace)
        return namespace["rates"], namespace["drift"]

    # public API

    def rates(self, x: Sequence[float]) -> list[float]:
        """Rate of every transition class in state ``x``."""
        return self._rates(x)

    def drift(self, x: Sequence[float]) -> list[float]:
        """Mean-field drift ``sum_c rate_c(x) * (produces - consumes)``."""
        return self._drift(x)

    def initial_state(self) -> tuple[int, ...]:
        x = [0] * self.n_vars
        for g in self.groups:
            x[g.offset] = g.count
        return tuple(x)

    def apply(self, cls: TransitionClass, x: Sequence[int]) -> tuple[int, ...]:
        y = list(x)
        for s, d in cls.moves:
            y[s] -= 1
            y[d] += 1
        return tuple(y)

    def population_transitions(self, x) -> list[tuple[TransitionClass, float]]:
        """Enabled transition classes in state ``x`` with their rates."""
        return [(c, r) for c, r in zip(self.classes, self._rates(x)) if r > 0.0]

    def local_transitions(self, state: LocalState) -> list[tuple[str, float, LocalState]]:
        """Transitions of one copy in ``state``: ``(action, rate, next state)``."""
        return [
            (lt.action, lt.rate, self.states[lt.dst])
            for lt in self.local
            if lt.src == state.index
        ]

    def group(self, name: str) -> Group:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(f"no population {name}")

    def state(self, label: str, group: str | None = None) -> LocalState:
        matches = [s for s in self.states if s.label == label and (group is None or s.group == group)]
        if not matches:
            raise KeyError(f"no local state {label}" + (f" in {group}" if group else ""))
        if len(matches) > 1:
            raise KeyError(f"local state {label} is ambiguous; name its group")
        return matches[0]

    def group_sums(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([x[g.offset : g.offset + g.size].sum() for g in self.groups])

    def group_action_matrix(self) -> tuple[list[tuple[str, str]], np.ndarray]:
        """0/1 matrix mapping class rates to ``(action, group)`` throughputs:
        the rate of ``action`` counting only classes ``group`` takes part in."""
        keys = sorted(
            {(c.action, self.groups[self.local[k].group].name) for c in self.classes for k in c.locals}
        )
        index = {key: i for i, key in enumerate(keys)}
        m = np.zeros((len(keys), len(self.classes)))
        for c in self.classes:
            for k in c.locals:
                m[index[(c.action, self.groups[self.local[k].group].name)], c.id] = 1.0
        return keys, m

    def throughput_tables(self, class_values) -> tuple[dict[str, float], dict[tuple[str, str], float]]:
        """Per-action and per-(action, group) sums of per-class values."""
        v = np.asarray(class_values, dtype=float)
        actions, m = self.action_matrix()
        keys, g = self.group_action_matrix()
        return dict(zip(actions, (m @ v).tolist())), dict(zip(keys, (g @ v).tolist()))

    def action_matrix(self) -> tuple[list[str], np.ndarray]:
        """0/1 matrix mapping class rates to per-action throughputs."""
        index = {a: i for i, a in enumerate(self.actions)}
        m = np.zeros((len(self.actions), len(self.classes)))
        for c in self.classes:
            m[index[c.action], c.id] = 1.0
        return self.actions, m
