"""Sweep runner shared by the command line: engine dispatch, per-point
metrics, the architecture comparison and its CSV tables."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (
    AnalysisError,
    AnalysisSolution,
    StateSpaceExceeded,
    build_ctmc,
    simulate_ssa,
    solve_fluid,
    steady_state,
)
from .metrics import MetricError, MetricSeries, measure, productivity, saturation_point, scalability
from .netmodels import PROCEDURES, ExperimentConfig, architecture, instantiate
from .semantics import CompiledModel

ENGINES = ("fluid", "ctmc", "ssa", "auto")
AUTO_CTMC_LIMIT = 100_000


@dataclass
class SSAOptions:
    horizon: float = 2000.0
    warmup: float = 200.0
    replications: int = 20


def parse_grid(text: str) -> list[int]:
    """``start:stop:step`` (inclusive stop) or a single ``n``."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            values = [int(parts[0])]
        elif len(parts) in (2, 3):
            start, stop = int(parts[0]), int(parts[1])
            step = int(parts[2]) if len(parts) == 3 else 1
            if step <= 0:
                raise ValueError("step must be positive")
            values = list(range(start, stop + 1, step))
        else:
            raise ValueError("expected start:stop:step")
    except ValueError as exc:
        raise ValueError(f"bad sweep {text!r}: {exc}") from None
    if not values:
        raise ValueError(f"bad sweep {text!r}: empty grid")
    if values[0] < 1:
        raise ValueError(f"bad sweep {text!r}: n must be >= 1")
    return values


def solve(compiled: CompiledModel, engine: str, seed: int = 0, ssa: SSAOptions | None = None) -> AnalysisSolution:
    """Run one engine; ``auto`` picks ctmc up to 1e5 reachable states."""
    if engine == "auto":
        try:
            chain = build_ctmc(compiled, max_states=AUTO_CTMC_LIMIT)
        except StateSpaceExceeded:
            return solve_fluid(compiled)
        return steady_state(chain)
    if engine == "ctmc":
        return steady_state(build_ctmc(compiled))
    if engine == "fluid":
        return solve_fluid(compiled)
    if engine == "ssa":
        ssa = ssa or SSAOptions()
        return simulate_ssa(compiled, ssa.horizon, ssa.warmup, seed, ssa.replications)
    raise ValueError(f"unknown engine {engine!r}")


def converged(sol: AnalysisSolution) -> bool:
    return bool(sol.diagnostics.get("settled", True))


def engine_detail(sol: AnalysisSolution) -> str:
    d = sol.diagnostics
    if sol.method == "ctmc":
        return f"states={d['states']};solver={d['solver']};iterations={d['iterations']}"
    if sol.method == "fluid":
        return f"t={d['time']:.6g};steps={d['steps']};polished={int(d['polished'])}"
    return f"replications={d['replications']};events={d['events']}"


@dataclass
class PointResult:
    arch: str
    config: str
    n: int
    engine: str = ""
    throughput: float = math.nan
    throughput_halfwidth: float = math.nan
    response_time: float = math.nan
    utilization: dict[str, float] = field(default_factory=dict)
    system_utilization: float = math.nan
    converged: bool = False
    detail: str = ""
    status: str = "ok"

    @property
    def failed(self) -> bool:
        return self.status != "ok"


def run_point(arch_id: str, config_name: str, config: ExperimentConfig, engine: str, seed: int, ssa: SSAOptions):
    """Solve one sweep point of a built-in model; failures become marked rows."""
    row = PointResult(arch_id, config_name, int(config.n))
    try:
        inst = instantiate(arch_id, config)
        row.utilization = {g.name: math.nan for g in inst.groups}
        sol = solve(inst.compiled, engine, seed, ssa)
        m = measure(sol, config.n, inst.procedure, inst.groups)
    except (AnalysisError, MetricError) as exc:
        row.status = f"error: {exc}"
        return row
    row.engine = sol.method
    row.throughput = m.throughput
    row.throughput_halfwidth = sol.throughput_ci(inst.procedure.completion_action, inst.procedure.completion_group)
    row.response_time = m.response_time
    row.utilization = m.utilization
    row.system_utilization = m.system_utilization
    row.converged = converged(sol)
    row.detail = engine_detail(sol)
    if not row.converged:
        row.status = "not settled"
    return row


def _run_point_args(args):
    return run_point(*args)


def sweep(
    arch_id: str,
    config: ExperimentConfig,
    grid: list[int],
    engine: str = "fluid",
    seed: int = 0,
    jobs: int = 1,
    ssa: SSAOptions | None = None,
    config_name: str = "custom",
) -> list[PointResult]:
    """Rows in grid order whatever order the workers finish in."""
    ssa = ssa or SSAOptions()
    tasks = [(arch_id, config_name, config.with_n(n), engine, seed, ssa) for n in grid]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_point_args, tasks))
    return [run_point(*t) for t in tasks]


# CSV output

def fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "nan" if math.isnan(value) else "%.9g" % value
    return str(value)


def write_csv(header: list[str], rows, path: Path | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def analyze_table(rows: list[PointResult]) -> tuple[list[str], list[list]]:
    groups = list(rows[0].utilization) if rows else []
    for r in rows:
        for g in r.utilization:
            if g not in groups:
                groups.append(g)
    header = ["n", "engine", "throughput", "throughput_halfwidth", "response_time"]
    header += [f"util_{g}" for g in groups] + ["system_utilization", "converged", "detail", "status"]
    body = []
    for r in rows:
        body.append(
            [r.n, r.engine, r.throughput, r.throughput_halfwidth, r.response_time]
            + [r.utilization.get(g, math.nan) for g in groups]
            + [r.system_utilization, r.converged, r.detail, r.status]
        )
    return header, body


# Architecture comparison

FIGURES = {
    "pdu": {"throughput": "fig7", "util_basic": "fig8", "util_scaled": "fig9", "scalability": "fig10"},
    "mobility": {"throughput": "fig11", "util_basic": "fig12", "util_scaled": "fig13", "scalability": "fig14"},
}
DEFAULT_GRIDS = {"pdu": "1:60:1", "mobility": "1:120:2"}


@dataclass
class Comparison:
    procedure: str
    grid: list[int]
    rows: dict[tuple[str, str], list[PointResult]]  # (arch, config) -> rows
    target_T: dict[str, float]
    productivity: dict[tuple[str, str], list[float]]
    scalability: dict[str, list[float]]
    saturation: dict[tuple[str, str], object]

    @property
    def failed(self) -> bool:
        return any(r.failed for rows in self.rows.values() for r in rows)


def _series(rows: list[PointResult]) -> tuple[np.ndarray, np.ndarray]:
    return np.array([r.n for r in rows], float), np.array([r.throughput for r in rows], float)


def compare(
    procedure: str,
    grid: list[int],
    target_T: float | None = None,
    engine: str = "fluid",
    seed: int = 0,
    jobs: int = 1,
    overrides: dict | None = None,
    ssa: SSAOptions | None = None,
) -> Comparison:
    """Both architectures, basic and scaled, over one grid.

    Productivity uses ``target_T`` when given, otherwise twice each
    architecture's basic-configuration response time at the first grid
    point (the low-load latency).
    """
    if procedure not in PROCEDURES:
        raise ValueError(f"unknown procedure {procedure!r}; use pdu or mobility")
    rows, targets, prod, scal, sat = {}, {}, {}, {}, {}
    for arch_id in PROCEDURES[procedure]:
        arch = architecture(arch_id)
        for which in ("basic", "scaled"):
            cfg = arch.config(which)
            if overrides:
                cfg = cfg.updated(overrides)
            rows[arch_id, which] = sweep(arch_id, cfg, grid, engine, seed, jobs, ssa, which)
        base = rows[arch_id, "basic"][0]
        targets[arch_id] = target_T if target_T is not None else 2.0 * base.response_time
        for which in ("basic", "scaled"):
            prod[arch_id, which] = [_productivity(r, targets[arch_id]) for r in rows[arch_id, which]]
            sat[arch_id, which] = _saturation(rows[arch_id, which])
        scal[arch_id] = [
            scalability(c1, c2) if c1 > 0 and not math.isnan(c2) else math.nan
            for c1, c2 in zip(prod[arch_id, "basic"], prod[arch_id, "scaled"])
        ]
    return Comparison(procedure, grid, rows, targets, prod, scal, sat)


def _productivity(r: PointResult, target: float) -> float:
    if r.failed or not r.system_utilization > 0 or math.isnan(r.response_time):
        return math.nan
    return productivity(r.throughput, r.system_utilization, r.response_time, target)


def _saturation(rows: list[PointResult]):
    n, t = _series(rows)
    if len(n) < 3 or np.isnan(t).any():
        return None
    try:
        return saturation_point((n, t))
    except MetricError:
        return None


def comparison_tables(cmp: Comparison) -> dict[str, tuple[list[str], list[list]]]:
    """File name -> (header, rows) for every dataset of a comparison."""
    fig = FIGURES[cmp.procedure]
    p = cmp.procedure
    out = {}

    head = ["architecture", "config", "n", "throughput", "response_time", "system_utilization", "productivity"]
    body = []
    for (arch_id, which), rows in cmp.rows.items():
        for r, c in zip(rows, cmp.productivity[arch_id, which]):
            body.append([arch_id, which, r.n, r.throughput, r.response_time, r.system_utilization, c])
    out[f"{fig['throughput']}_{p}_throughput.csv"] = (head, body)

    for which in ("basic", "scaled"):
        body = []
        for arch_id in PROCEDURES[p]:
            for r in cmp.rows[arch_id, which]:
                for g, u in r.utilization.items():
                    body.append([arch_id, r.n, g, u])
        out[f"{fig['util_' + which]}_{p}_utilization_{which}.csv"] = (["architecture", "n", "group", "utilization"], body)

    body = []
    for arch_id in PROCEDURES[p]:
        for r, c1, c2, s in zip(
            cmp.rows[arch_id, "basic"], cmp.productivity[arch_id, "basic"], cmp.productivity[arch_id, "scaled"], cmp.scalability[arch_id]
        ):
            body.append([arch_id, r.n, cmp.target_T[arch_id], c1, c2, s])
    out[f"{fig['scalability']}_{p}_scalability.csv"] = (
        ["architecture", "n", "target_T", "productivity_basic", "productivity_scaled", "scalability"],
        body,
    )

    body = []
    for (arch_id, which), s in cmp.saturation.items():
        rows = cmp.rows[arch_id, which]
        if s is None:
            body.append([arch_id, which, "undefined", math.nan])
        elif s.reached:
            t_sat = next(r.throughput for r in rows if r.n == s.n)
            body.append([arch_id, which, s.n, t_sat])
        else:
            body.append([arch_id, which, "not reached", math.nan])
    out[f"summary_{p}_saturation.csv"] = (["architecture", "config", "saturation_n", "saturation_throughput"], body)
    return out


def saturation_from_csv(path: Path) -> dict[tuple[str, str], object]:
    """Recompute the saturation summary from an emitted throughput CSV."""
    curves: dict[tuple[str, str], list[tuple[float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            curves.setdefault((rec["architecture"], rec["config"]), []).append((float(rec["n"]), float(rec["throughput"])))
    result = {}
    for key, pts in curves.items():
        n, t = zip(*pts)
        result[key] = saturation_point((n, t))
    return result
