from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..semantics import LocalState


class AnalysisError(RuntimeError):
    pass


class NonConvergence(AnalysisError):
    pass


@dataclass
class AnalysisSolution:
    """Steady-state summary shared by every engine.

    ``populations`` is indexed like ``states``; ``throughput`` maps each
    action to its steady-state rate (actions per unit time).  For ``ssa``
    the ``*_halfwidth`` fields hold 95% confidence half-widths across
    replications.  ``group_throughput[(action, group)]`` counts only the
    transitions of ``action`` that population ``group`` takes part in, which
    separates, say, an NF's ``session`` from a processor's own ``session``.
    """

    method: str
    states: list[LocalState]
    populations: np.ndarray
    throughput: dict[str, float]
    diagnostics: dict = field(default_factory=dict)
    population_halfwidth: np.ndarray | None = None
    throughput_halfwidth: dict[str, float] | None = None
    group_throughput: dict[tuple[str, str], float] = field(default_factory=dict)
    group_throughput_halfwidth: dict[tuple[str, str], float] | None = None

    @property
    def expected_population(self) -> dict[LocalState, float]:
        return {s: float(v) for s, v in zip(self.states, self.populations)}

    def population(self, label: str, group: str | None = None) -> float:
        total, found = 0.0, False
        for s, v in zip(self.states, self.populations):
            if s.label == label and (group is None or s.group == group):
                total += float(v)
                found = True
        if not found:
            raise KeyError(f"no local state {label}")
        return total

    def group_total(self, group: str) -> float:
        return float(sum(v for s, v in zip(self.states, self.populations) if s.group == group))

    def action_throughput(self, action: str, group: str | None = None) -> float:
        if action not in self.throughput:
            raise KeyError(f"unknown action {action}")
        if group is None:
            return self.throughput[action]
        return self.group_throughput.get((action, group), 0.0)

    def throughput_ci(self, action: str, group: str | None = None) -> float:
        table = self.throughput_halfwidth if group is None else self.group_throughput_halfwidth
        if table is None:
            return 0.0
        return table[action] if group is None else table.get((action, group), 0.0)
