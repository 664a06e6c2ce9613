"""``pepaflow`` command line: check, analyze and compare.

Exit status: 0 ok, 1 I/O or parse error, 2 validation error, 3 numeric
failure (a solver that did not converge, or any failed sweep row).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .analysis import AnalysisError
from .experiments import (
    DEFAULT_GRIDS,
    ENGINES,
    SSAOptions,
    analyze_table,
    compare,
    comparison_tables,
    converged,
    engine_detail,
    parse_grid,
    solve,
    sweep,
    write_csv,
)
from .metrics import productivity
from .netmodels import REGISTRY, architecture
from .parser import ParseError, SourceModel, parse_model
from .semantics import CompiledModel
from .syntax import BindingError, bind_parameters, validate_model

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("pepaflow")


class CLIError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CLIError(f"cannot read config {path}: {exc.strerror or exc}", EXIT_IO) from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CLIError(f"{path}:{lineno}: expected key=value", EXIT_IO)
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def collect_overrides(args) -> dict[str, str]:
    values = read_config_file(args.config) if args.config else {}
    for item in args.set or []:
        if "=" not in item:
            raise CLIError(f"--set expects key=value, got {item!r}", EXIT_INVALID)
        key, value = (part.strip() for part in item.split("=", 1))
        values[key] = value
    return values


def load_source(path: str) -> SourceModel:
    try:
        return SourceModel.from_path(path)
    except OSError as exc:
        raise CLIError(f"{path}: {exc.strerror or exc}", EXIT_IO) from None


def cmd_check(args) -> int:
    src = load_source(args.path)
    try:
        model = parse_model(src)
    except ParseError as exc:
        raise CLIError(str(exc), EXIT_IO) from None
    report = validate_model(model)
    if not report.ok:
        for v in report:
            print(f"{args.path}: {v}", file=sys.stderr)
        return EXIT_INVALID
    print(f"{args.path}: ok ({len(model.definitions)} definitions)")
    return EXIT_OK


def _ssa_options(args) -> SSAOptions:
    return SSAOptions(args.horizon, args.warmup, args.replications)


def _emit(text: str, out: str | None, name: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    print(f"wrote {path}", file=sys.stderr)


def cmd_analyze(args) -> int:
    overrides = collect_overrides(args)
    if args.target_t is not None:
        overrides["target_T"] = args.target_t
    try:
        grid = parse_grid(args.sweep) if args.sweep else None
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_INVALID) from None

    if args.model in REGISTRY:
        arch = architecture(args.model)
        try:
            cfg = arch.config(args.configuration).updated(overrides)
        except ValueError as exc:
            raise CLIError(str(exc), EXIT_INVALID) from None
        rows = sweep(arch.id, cfg, grid or [cfg.n], args.engine, args.seed, args.jobs, _ssa_options(args), args.configuration)
        header, body = analyze_table(rows)
        if cfg.target_T is not None:
            header.insert(header.index("converged"), "productivity")
            pos = header.index("productivity")
            for r, line in zip(rows, body):
                ok = not r.failed and r.system_utilization > 0 and not math.isnan(r.response_time)
                c = productivity(r.throughput, r.system_utilization, r.response_time, cfg.target_T) if ok else math.nan
                line.insert(pos, c)
        _emit(write_csv(header, body), args.out, f"{arch.id}_{args.configuration}.csv")
        failed = [r for r in rows if r.failed]
        for r in failed:
            print(f"n={r.n}: {r.status}", file=sys.stderr)
        return EXIT_NUMERIC if failed else EXIT_OK

    return _analyze_file(args, overrides, grid)


def _analyze_file(args, overrides: dict[str, str], grid) -> int:
    """Sweep a model file over ``n``: one throughput column per action."""
    src = load_source(args.model)
    try:
        model = parse_model(src)
    except ParseError as exc:
        raise CLIError(str(exc), EXIT_IO) from None
    report = validate_model(model)
    if not report.ok:
        for v in report:
            print(f"{args.model}: {v}", file=sys.stderr)
        return EXIT_INVALID
    overrides.pop("target_T", None)
    values = {k: float(v) for k, v in overrides.items()}
    grid = grid or [int(values.get("n", model.count_bindings.get("n", 1)))]
    header, body, failed, actions = None, [], False, None
    for n in grid:
        try:
            concrete = bind_parameters(model, {**values, "n": n})
        except BindingError as exc:
            raise CLIError(f"{args.model}: {exc}", EXIT_INVALID) from None
        cm = CompiledModel(concrete, check=False)
        actions = actions or cm.actions
        try:
            sol = solve(cm, args.engine, args.seed, _ssa_options(args))
            ok = converged(sol)
            row = [n, sol.method] + [sol.throughput.get(a, math.nan) for a in actions]
            row += [ok, engine_detail(sol), "ok" if ok else "not settled"]
            failed |= not ok
        except AnalysisError as exc:
            row = [n, ""] + [math.nan] * len(actions) + [False, "", f"error: {exc}"]
            failed = True
        body.append(row)
    header = ["n", "engine"] + [f"tput_{a}" for a in actions] + ["converged", "detail", "status"]
    _emit(write_csv(header, body), args.out, Path(args.model).stem + ".csv")
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_compare(args) -> int:
    overrides = collect_overrides(args)
    try:
        grid = parse_grid(args.sweep or DEFAULT_GRIDS[args.procedure])
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_INVALID) from None
    if len(grid) < 3:
        raise CLIError("compare needs a grid of at least 3 points", EXIT_INVALID)
    target = args.target_t
    if target is None and "target_T" in overrides:
        target = float(overrides.pop("target_T"))
    try:
        cmp = compare(args.procedure, grid, target, args.engine, args.seed, args.jobs, overrides, _ssa_options(args))
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_INVALID) from None
    out = Path(args.out or ".")
    for name, (header, body) in comparison_tables(cmp).items():
        write_csv(header, body, out / name)
        print(f"wrote {out / name}", file=sys.stderr)
    print(f"{'architecture':<20}{'config':<8}{'saturation n':>14}")
    for (arch_id, which), s in cmp.saturation.items():
        print(f"{arch_id:<20}{which:<8}{str(s) if s is not None else 'undefined':>14}")
    return EXIT_NUMERIC if cmp.failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pepaflow", description="Population PEPA models of mobile control planes.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="parse and validate a model file")
    p.add_argument("path")
    p.set_defaults(func=cmd_check)

    def common(p, default_engine: str):
        p.add_argument("--engine", choices=ENGINES, default=default_engine)
        p.add_argument("--sweep", metavar="START:STOP:STEP", help="UE population grid (inclusive)")
        p.add_argument("--config", metavar="FILE", help="key=value file of counts and rates")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one parameter (repeatable)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--target-t", type=float, dest="target_t", help="reference response time for productivity")
        p.add_argument("--replications", type=int, default=20, help="ssa replications")
        p.add_argument("--horizon", type=float, default=2000.0, help="ssa run length")
        p.add_argument("--warmup", type=float, default=200.0, help="ssa warm-up discarded from averages")

    p = sub.add_parser("analyze", help="sweep one model over the UE population")
    p.add_argument("--model", "--arch", dest="model", required=True, help=f"model file or one of {', '.join(REGISTRY)}")
    p.add_argument("--configuration", choices=("basic", "scaled"), default="basic", help="built-in NF counts")
    common(p, "fluid")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="proposed vs 5GS datasets for one procedure")
    p.add_argument("procedure", choices=sorted(DEFAULT_GRIDS))
    common(p, "fluid")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("pepaflow: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"pepaflow: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
