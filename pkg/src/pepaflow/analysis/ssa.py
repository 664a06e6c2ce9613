"""Exact-jump stochastic simulation of the population CTMC.

Random numbers come from numpy's MT19937 (Mersenne Twister, a twisted
GFSR generator).  Replication ``i`` of a run with seed ``s`` uses the
``i``-th child of ``numpy.random.SeedSequence(s)``, so a given
``(model, seed, replications, horizon, warmup)`` always reproduces the
same numbers.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from itertools import accumulate

import numpy as np
from scipy import stats

from ..semantics import CompiledModel
from ..syntax import ConcreteModel
from .solution import AnalysisSolution

_BATCH = 8192


def make_rng(seed_seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.MT19937(seed_seq))


def simulate_once(cm: CompiledModel, horizon: float, warmup: float, rng: np.random.Generator):
    """One trajectory.  Returns ``(mean populations, class counts, events)``
    measured over ``[warmup, horizon]``."""
    rates_fn = cm.rates
    moves = [c.moves for c in cm.classes]
    x = list(cm.initial_state())
    n = len(x)
    area = [0.0] * n
    stamp = [warmup] * n  # last time each count changed, clipped to the window
    counts = [0] * len(moves)
    t = 0.0
    events = 0
    buf, pos = rng.random(_BATCH), 0

    while True:
        r = rates_fn(x)
        cum = list(accumulate(r))
        total = cum[-1]
        if total <= 0.0:
            break
        if pos + 2 > _BATCH:
            buf, pos = rng.random(_BATCH), 0
        u1, u2 = buf[pos], buf[pos + 1]
        pos += 2
        t_next = t - math.log1p(-u1) / total
        if t_next >= horizon:
            break
        c = bisect_right(cum, u2 * total)
        if c >= len(cum):
            c = len(cum) - 1
        while r[c] <= 0.0:  # guard against landing on a zero-width bucket
            c -= 1
        t = t_next
        events += 1
        if t > warmup:
            counts[c] += 1
        for s, d in moves[c]:
            for i, step in ((s, -1), (d, 1)):
                if t > warmup:
                    area[i] += x[i] * (t - stamp[i])
                    stamp[i] = t
                x[i] += step

    end = horizon
    for i in range(n):
        area[i] += x[i] * (end - stamp[i])
    window = horizon - warmup
    return np.array(area) / window, np.array(counts, dtype=float), events


def simulate_ssa(
    model: ConcreteModel | CompiledModel,
    horizon: float,
    warmup: float = 0.0,
    seed: int = 0,
    replications: int = 1,
) -> AnalysisSolution:
    """Independent replications of the exact stochastic simulation.

    Populations are time averages and throughputs are event counts per
    unit time, both over ``[warmup, horizon]``; half-widths are 95%
    Student-t intervals across replications (``inf`` for one replication).
    """
    if not horizon > warmup >= 0.0:
        raise ValueError("need 0 <= warmup < horizon")
    if replications < 1:
        raise ValueError("replications must be >= 1")
    cm = model if isinstance(model, CompiledModel) else CompiledModel(model)
    window = horizon - warmup

    pops, rates, events = [], [], 0
    for child in np.random.SeedSequence(seed).spawn(replications):
        p, c, e = simulate_once(cm, horizon, warmup, make_rng(child))
        pops.append(p)
        rates.append(c / window)
        events += e
    pops, rates = np.array(pops), np.array(rates)

    if replications > 1:
        q = stats.t.ppf(0.975, replications - 1) / math.sqrt(replications)
        pop_hw = q * pops.std(axis=0, ddof=1)
    else:
        q = math.inf
        pop_hw = np.full(pops.shape[1], np.inf)

    def halfwidths(table_of):
        # half-widths of sums of class rates, computed replication by replication
        per_rep = [table_of(r) for r in rates]
        keys = per_rep[0].keys()
        if replications == 1:
            return {k: math.inf for k in keys}
        return {k: float(q * np.std([t[k] for t in per_rep], ddof=1)) for k in keys}

    throughput, by_group = cm.throughput_tables(rates.mean(axis=0))
    return AnalysisSolution(
        "ssa",
        list(cm.states),
        pops.mean(axis=0),
        throughput,
        {"replications": replications, "events": events, "horizon": horizon, "warmup": warmup, "seed": seed},
        population_halfwidth=pop_hw,
        throughput_halfwidth=halfwidths(lambda r: cm.throughput_tables(r)[0]),
        group_throughput=by_group,
        group_throughput_halfwidth=halfwidths(lambda r: cm.throughput_tables(r)[1]),
    )
