"""Performance measures over an ``AnalysisSolution``.

Throughput is the rate of the procedure's completion action, response time
follows from Little's law over the initiating component, and the
productivity/scalability pair compares two resource configurations:

    r(m) = 1 / (1 + T(m) / target_T)
    C(m) = t(m) * r(m) / U(m)
    S(m1, m2) = C(m2) / C(m1)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .analysis import AnalysisSolution

SATURATION_FRACTION = 0.05


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ProcedureSpec:
    """What counts as one completed procedure, and who is waiting for it."""

    completion_action: str
    initiator_group: str
    idle_states: frozenset[str]
    completion_group: str | None = None  # count only completions this population joins

    def __post_init__(self):
        object.__setattr__(self, "idle_states", frozenset(self.idle_states))
        if not self.idle_states:
            raise MetricError("idle_states must be nonempty")


@dataclass(frozen=True)
class ProcessorGroup:
    name: str
    component: str  # population (group) name in the compiled model
    busy_states: frozenset[str]
    capacity: int

    def __post_init__(self):
        object.__setattr__(self, "busy_states", frozenset(self.busy_states))
        if not self.busy_states:
            raise MetricError(f"{self.name}: busy_states must be nonempty")
        if self.capacity < 1:
            raise MetricError(f"{self.name}: capacity must be >= 1")


def procedure_rate(sol: AnalysisSolution, spec: ProcedureSpec) -> float:
    """Completed procedures per unit time."""
    return sol.action_throughput(spec.completion_action, spec.completion_group)


def utilization(sol: AnalysisSolution, group: ProcessorGroup) -> float:
    """Mean fraction of the group's processors that are busy."""
    if group.capacity <= 0:
        raise MetricError("capacity must be positive")
    busy = 0.0
    found = set()
    for s, v in zip(sol.states, sol.populations):
        if s.group == group.component and s.label in group.busy_states:
            busy += float(v)
            found.add(s.label)
    missing = group.busy_states - found
    if missing:
        raise MetricError(f"{group.name}: no local state {sorted(missing)[0]} in {group.component}")
    # fluid/ssa averages can overshoot by rounding; keep the documented range
    return min(max(busy / group.capacity, 0.0), 1.0)


def in_procedure(sol: AnalysisSolution, spec: ProcedureSpec) -> float:
    """Mean number of initiators inside the procedure (``L`` in Little's law)."""
    total, seen = 0.0, False
    for s, v in zip(sol.states, sol.populations):
        if s.group == spec.initiator_group:
            seen = True
            if s.label not in spec.idle_states:
                total += float(v)
    if not seen:
        raise MetricError(f"no initiator population {spec.initiator_group}")
    return total


def response_time(sol: AnalysisSolution, spec: ProcedureSpec) -> float:
    """Little's-law mean procedure duration ``L / lambda``."""
    lam = procedure_rate(sol, spec)
    if not lam > 0.0:
        raise MetricError(f"response time undefined: {spec.completion_action} has zero throughput")
    return in_procedure(sol, spec) / lam


def system_utilization(values: Sequence[float], groups: Sequence[ProcessorGroup]) -> float:
    """Capacity-weighted mean of per-group utilizations."""
    caps = np.array([g.capacity for g in groups], dtype=float)
    return float(np.dot(values, caps) / caps.sum())


def response_factor(T: float, target_T: float) -> float:
    if target_T <= 0.0:
        raise MetricError("target_T must be positive")
    return 1.0 / (1.0 + T / target_T)


def productivity(t: float, U: float, T: float, target_T: float) -> float:
    """``C = t * r / U``."""
    if U <= 0.0:
        raise MetricError("productivity undefined at zero utilization")
    return t * response_factor(T, target_T) / U


def scalability(c1: float, c2: float) -> float:
    """``S = c2 / c1``."""
    if c1 == 0.0:
        raise MetricError("scalability undefined for zero base productivity")
    return c2 / c1


@dataclass
class MetricPoint:
    n: float
    throughput: float
    response_time: float  # nan when throughput is zero
    utilization: dict[str, float]
    system_utilization: float
    productivity: float = math.nan


@dataclass
class MetricSeries:
    points: list[MetricPoint] = field(default_factory=list)

    @property
    def n(self) -> np.ndarray:
        return np.array([p.n for p in self.points], dtype=float)

    @property
    def throughput(self) -> np.ndarray:
        return np.array([p.throughput for p in self.points], dtype=float)

    def append(self, point: MetricPoint) -> None:
        self.points.append(point)


def measure(
    sol: AnalysisSolution,
    n: float,
    spec: ProcedureSpec,
    groups: Sequence[ProcessorGroup],
    target_T: float | None = None,
) -> MetricPoint:
    """All per-point measures in one record."""
    t = procedure_rate(sol, spec)
    T = response_time(sol, spec) if t > 0.0 else math.nan
    util = {g.name: utilization(sol, g) for g in groups}
    U = system_utilization(list(util.values()), groups)
    C = math.nan
    if target_T is not None and U > 0.0 and not math.isnan(T):
        C = productivity(t, U, T, target_T)
    return MetricPoint(n, t, T, util, U, C)


@dataclass
class Saturation:
    """Result of ``saturation_point``; ``n`` is None when not reached."""

    n: float | None
    slopes: np.ndarray

    @property
    def reached(self) -> bool:
        return self.n is not None

    def __str__(self):
        return "not reached" if self.n is None else f"{self.n:g}"


def saturation_point(
    series: MetricSeries | tuple[Iterable[float], Iterable[float]],
    fraction: float = SATURATION_FRACTION,
) -> Saturation:
    """Smallest grid ``n`` from which the throughput slope drops below
    ``fraction`` of the initial slope.

    The slope of interval ``[n_i, n_{i+1}]`` is attributed to its left end,
    so a curve that is linear up to ``n_k`` and flat afterwards gives
    ``n* = n_k``.  Accepts a ``MetricSeries`` or an ``(n, t)`` pair.
    """
    if isinstance(series, MetricSeries):
        n, t = series.n, series.throughput
    else:
        n, t = (np.asarray(v, dtype=float) for v in series)
    if len(n) < 3:
        raise MetricError("saturation needs at least 3 grid points")
    if np.any(np.diff(n) <= 0):
        raise MetricError("grid must be strictly increasing")
    slopes = np.diff(t) / np.diff(n)
    if not slopes[0] > 0.0:
        raise MetricError("throughput does not grow on the first grid interval")
    below = np.flatnonzero(slopes < fraction * slopes[0])
    if len(below) == 0:
        return Saturation(None, slopes)
    return Saturation(float(n[below[0]]), slopes)
