"""Process-algebra terms, models, structural validation and parameter binding.

Terms are immutable dataclasses.  A :class:`Model` keeps rates and counts
symbolic; :func:`bind_parameters` turns it into a :class:`ConcreteModel`
where every rate is a number and every population size an integer.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from typing import Union


class BindingError(ValueError):
    """A rate or count name has no usable value."""


# -- rates ------------------------------------------------------------------


@dataclass(frozen=True)
class NamedRate:
    name: str


@dataclass(frozen=True)
class Literal:
    value: float


@dataclass(frozen=True)
class Passive:
    """Unbounded rate; ``weight`` splits choices between passive branches."""

    weight: float = 1.0


RateSpec = Union[NamedRate, Literal, Passive]


# -- processes --------------------------------------------------------------


@dataclass(frozen=True)
class Prefix:
    action: str
    rate: RateSpec
    continuation: "ProcessExpr"


@dataclass(frozen=True)
class Choice:
    left: "ProcessExpr"
    right: "ProcessExpr"


@dataclass(frozen=True)
class Constant:
    name: str


@dataclass(frozen=True)
class CountExpr:
    """Product of identifiers and integer literals, e.g. ``N_pssf*N_pssfp*N_t``."""

    factors: tuple[Union[str, int], ...]

    def names(self) -> set[str]:
        return {f for f in self.factors if isinstance(f, str)}

    def evaluate(self, counts: Mapping[str, int]) -> int:
        value = 1
        for f in self.factors:
            if isinstance(f, str):
                if f not in counts:
                    raise BindingError(f"unbound count {f}")
                f = counts[f]
            value *= int(f)
        return value


@dataclass(frozen=True)
class Population:
    body: Constant
    count: CountExpr

    def __post_init__(self):
        if not isinstance(self.body, Constant):
            raise TypeError("only named components can be replicated")


@dataclass(frozen=True)
class Cooperation:
    left: "ProcessExpr"
    actions: frozenset[str]
    right: "ProcessExpr"


ProcessExpr = Union[Prefix, Choice, Constant, Cooperation, Population]


@dataclass(frozen=True)
class Model:
    definitions: dict[str, ProcessExpr]
    system: ProcessExpr
    rate_bindings: dict[str, float] = field(default_factory=dict)
    count_bindings: dict[str, int] = field(default_factory=dict)

    def body(self, name: str) -> ProcessExpr:
        try:
            return self.definitions[name]
        except KeyError:
            raise KeyError(f"undefined constant {name}") from None


@dataclass(frozen=True)
class ConcreteModel:
    """A model whose rates are all :class:`Literal`/:class:`Passive` and whose
    populations all have a single integer factor."""

    definitions: dict[str, ProcessExpr]
    system: ProcessExpr

    def body(self, name: str) -> ProcessExpr:
        try:
            return self.definitions[name]
        except KeyError:
            raise KeyError(f"undefined constant {name}") from None

    def populations(self) -> list[tuple[str, int]]:
        return [(p.body.name, p.count.factors[0]) for p in leaves(self.system)]


# -- traversal helpers --------------------------------------------------------


def leaves(system: ProcessExpr) -> Iterator[Population]:
    """Population leaves of a system equation, left to right."""
    if isinstance(system, Population):
        yield system
    elif isinstance(system, Cooperation):
        yield from leaves(system.left)
        yield from leaves(system.right)
    else:
        raise TypeError(f"not a system term: {system!r}")


def _prefixes(expr, model, seen: set[str]) -> Iterator[Prefix]:
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, Prefix):
            yield e
            stack.append(e.continuation)
        elif isinstance(e, Choice):
            stack.append(e.right)
            stack.append(e.left)
        elif isinstance(e, Constant):
            if e.name not in seen:
                seen.add(e.name)
                stack.append(model.body(e.name))
        elif isinstance(e, Cooperation):
            stack.append(e.right)
            stack.append(e.left)
        elif isinstance(e, Population):
            stack.append(e.body)
        else:
            raise TypeError(f"unknown term {e!r}")


def action_alphabet(expr: ProcessExpr, model: Model | ConcreteModel) -> set[str]:
    """Actions of every prefix reachable from ``expr``.

    Raises ``KeyError`` for an undefined constant.
    """
    return {p.action for p in _prefixes(expr, model, set())}


def constants_in(expr: ProcessExpr) -> Iterator[str]:
    """Constant names occurring syntactically in ``expr`` (no unfolding)."""
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, Constant):
            yield e.name
        elif isinstance(e, Prefix):
            stack.append(e.continuation)
        elif isinstance(e, (Choice, Cooperation)):
            stack.extend((e.left, e.right))
        elif isinstance(e, Population):
            stack.append(e.body)


def rates_in(expr: ProcessExpr) -> Iterator[RateSpec]:
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, Prefix):
            yield e.rate
            stack.append(e.continuation)
        elif isinstance(e, (Choice, Cooperation)):
            stack.extend((e.left, e.right))


# -- validation ----------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str

    def __str__(self):
        return self.message


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __iter__(self):
        return iter(self.violations)

    def __len__(self):
        return len(self.violations)

    def add(self, kind: str, message: str) -> None:
        self.violations.append(Violation(kind, message))


def _unguarded_successors(expr) -> set[str]:
    """Constants reachable from ``expr`` without passing through a prefix."""
    if isinstance(expr, Constant):
        return {expr.name}
    if isinstance(expr, Choice):
        return _unguarded_successors(expr.left) | _unguarded_successors(expr.right)
    return set()


def _find_unguarded(model: Model) -> list[str]:
    graph = {
        name: {c for c in _unguarded_successors(body) if c in model.definitions}
        for name, body in model.definitions.items()
    }
    bad = []
    for start in graph:
        stack, seen = list(graph[start]), set()
        while stack:
            node = stack.pop()
            if node == start:
                bad.append(start)
                break
            if node not in seen:
                seen.add(node)
                stack.extend(graph[node])
    return bad


def _is_sequential(expr) -> bool:
    if isinstance(expr, Prefix):
        return _is_sequential(expr.continuation)
    if isinstance(expr, Choice):
        return _is_sequential(expr.left) and _is_sequential(expr.right)
    return isinstance(expr, Constant)


def _passive_actions(expr, model) -> set[str]:
    return {p.action for p in _prefixes(expr, model, set()) if isinstance(p.rate, Passive)}


def validate_model(model: Model | ConcreteModel) -> ValidationReport:
    """Check a model for structural problems.

    Violations are returned as data; an empty report means the model is
    well-formed.
    """
    report = ValidationReport()
    defined = set(model.definitions)

    for name, body in model.definitions.items():
        if not _is_sequential(body):
            report.add("non-sequential", f"definition {name} is not a sequential component")
        for c in sorted(set(constants_in(body)) - defined):
            report.add("undefined", f"undefined constant {c} (in {name})")
        for r in rates_in(body):
            if isinstance(r, Literal) and not r.value > 0:
                report.add("rate", f"nonpositive rate {r.value} in {name}")
            if isinstance(r, Passive) and not r.weight > 0:
                report.add("rate", f"nonpositive passive weight in {name}")
    for name in _find_unguarded(model):
        report.add("unguarded", f"unguarded recursion at {name}")

    try:
        pops = list(leaves(model.system))
    except TypeError:
        report.add("system", "system equation must be a cooperation of populations")
        return report
    for c in sorted({p.body.name for p in pops} - defined):
        report.add("undefined", f"undefined constant {c} (in system)")
    if not report.ok:
        return report

    def check(node):
        if isinstance(node, Population):
            alpha = action_alphabet(node, model)
            return alpha, _passive_actions(node, model)
        la, lp = check(node.left)
        ra, rp = check(node.right)
        for a in sorted(node.actions):
            if a not in la:
                report.add("cooperation", f"cooperation action {a} missing from left operand alphabet")
            if a not in ra:
                report.add("cooperation", f"cooperation action {a} missing from right operand alphabet")
            if a in lp and a in rp:
                report.add("passive", f"both cooperands passive on action {a}")
        shared = node.actions
        passive = (lp | rp) - {a for a in shared if (a in lp) != (a in rp)}
        return la | ra, passive

    check(model.system)
    return report


# -- binding -----------------------------------------------------------------------


def _free_names(model: Model) -> tuple[set[str], set[str]]:
    rates = set()
    for body in model.definitions.values():
        rates |= {r.name for r in rates_in(body) if isinstance(r, NamedRate)}
    counts = set()
    for p in leaves(model.system):
        counts |= p.count.names()
    return rates, counts


def free_names(model: Model) -> tuple[set[str], set[str]]:
    """Names of (rates, counts) the model needs bound, minus its own bindings."""
    rates, counts = _free_names(model)
    return rates - set(model.rate_bindings), counts - set(model.count_bindings)


def _bind_expr(expr, rates: Mapping[str, float]):
    if isinstance(expr, Prefix):
        rate = expr.rate
        if isinstance(rate, NamedRate):
            if rate.name not in rates:
                raise BindingError(f"unbound rate {rate.name}")
            value = float(rates[rate.name])
            if not (value > 0 and math.isfinite(value)):
                raise BindingError(f"rate {rate.name} must be positive, got {value}")
            rate = Literal(value)
        return Prefix(expr.action, rate, _bind_expr(expr.continuation, rates))
    if isinstance(expr, Choice):
        return Choice(_bind_expr(expr.left, rates), _bind_expr(expr.right, rates))
    return expr


def _bind_system(expr, counts: Mapping[str, int]):
    if isinstance(expr, Population):
        value = expr.count.evaluate(counts)
        if value < 1:
            raise BindingError(f"population of {expr.body.name} must be >= 1, got {value}")
        return Population(expr.body, CountExpr((value,)))
    return Cooperation(_bind_system(expr.left, counts), expr.actions, _bind_system(expr.right, counts))


def bind_parameters(model: Model, config=None) -> ConcreteModel:
    """Replace every named rate and count in ``model`` by a number.

    ``config`` is a mapping of names to values, or any object with a
    ``bindings()`` method returning one (such as an ``ExperimentConfig``).
    Values in ``config`` override the model's own bindings.
    """
    values: dict[str, float] = {}
    if config is not None:
        values = dict(config.bindings() if hasattr(config, "bindings") else config)
    rates = {**model.rate_bindings, **values}
    counts = {**model.count_bindings, **values}
    for name, v in counts.items():
        if isinstance(v, float) and v.is_integer():
            counts[name] = int(v)
    definitions = {name: _bind_expr(body, rates) for name, body in model.definitions.items()}
    return ConcreteModel(definitions, _bind_system(model.system, counts))


def rename_population(system: ProcessExpr, target: str, split: Iterable[int]):
    """Split the population of ``target`` into independent sub-populations.

    ``Ue1[n]`` becomes ``Ue1[k1] <> Ue1[k2] <> ...``; the apparent-rate
    semantics of the result is identical, but the first sub-population can
    then be observed on its own (used to tag a single copy).
    """
    split = list(split)

    def walk(e):
        if isinstance(e, Population):
            if e.body.name != target:
                return e
            parts = [Population(e.body, CountExpr((k,))) for k in split if k > 0]
            out = parts[0]
            for p in parts[1:]:
                out = Cooperation(out, frozenset(), p)
            return out
        return Cooperation(walk(e.left), e.actions, walk(e.right))

    return walk(system)
