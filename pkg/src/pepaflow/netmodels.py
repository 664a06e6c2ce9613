"""Built-in network models: the proposed architecture and the 5GS baseline,
each for PDU session establishment and for handover.

Every entry pairs a shipped ``.pepa`` file with the procedure it measures
and the processor groups whose utilization is reported.  The model
directory can be redirected with the ``PEPAFLOW_MODELS`` environment
variable, which makes a corrected flow a data change only.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .metrics import ProcedureSpec, ProcessorGroup
from .parser import SourceModel, parse_model
from .semantics import CompiledModel
from .syntax import ConcreteModel, Model, bind_parameters, free_names, validate_model

MODELS_ENV = "PEPAFLOW_MODELS"
BUILTIN_DIR = Path(__file__).with_name("models")

DEFAULT_RATES = {"r_r": 100.0, "r_a": 200.0, "r_p": 50.0, "r_iat": 1.0}

NF_NAMES = ("pssf", "con", "upf", "upt", "msf", "ran", "cn", "amf", "smf", "sdu", "scu", "tdu", "tcu")


class UnknownModel(KeyError):
    pass


@dataclass
class ExperimentConfig:
    """UE population, NF instance/processor counts, threads and rates.

    Instance counts are ``N_<nf>``, processors per instance ``N_<nf>p`` and
    threads per processor ``N_t``; all default to 1.  ``target_T`` is the
    reference response time used by the productivity measure (None means
    derive it from a low-load run).
    """

    n: int = 1
    counts: dict[str, int] = field(default_factory=dict)
    rates: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_RATES))
    target_T: float | None = None

    def __post_init__(self):
        full = {f"N_{nf}": 1 for nf in NF_NAMES}
        full.update({f"N_{nf}p": 1 for nf in NF_NAMES})
        full["N_t"] = 1
        full.update(self.counts)
        self.counts = full
        self.rates = {**DEFAULT_RATES, **self.rates}
        self.check()

    def check(self) -> None:
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        for k, v in self.counts.items():
            if int(v) != v or v < 1:
                raise ValueError(f"{k} must be a positive integer, got {v}")
        for k, v in self.rates.items():
            if not v > 0:
                raise ValueError(f"{k} must be positive, got {v}")
        if self.target_T is not None and not self.target_T > 0:
            raise ValueError("target_T must be positive")

    def bindings(self) -> dict[str, float]:
        return {"n": int(self.n), **{k: int(v) for k, v in self.counts.items()}, **self.rates}

    def with_n(self, n: int) -> "ExperimentConfig":
        return replace(self, n=n, counts=dict(self.counts), rates=dict(self.rates))

    def updated(self, values: dict[str, str | float]) -> "ExperimentConfig":
        """Copy with ``name=value`` overrides; names follow ``bindings()``."""
        n, counts, rates, target = self.n, dict(self.counts), dict(self.rates), self.target_T
        for key, raw in values.items():
            if key == "n":
                n = _as_int(key, raw)
            elif key in ("target_T", "target_t"):
                target = float(raw)
            elif key.startswith("N_"):
                counts[key] = _as_int(key, raw)
            elif key.startswith("r_"):
                rates[key] = float(raw)
            else:
                raise ValueError(f"unknown configuration key {key!r}")
        return ExperimentConfig(n, counts, rates, target)


def _as_int(key, raw) -> int:
    v = float(raw)
    if not v.is_integer():
        raise ValueError(f"{key} must be an integer, got {raw}")
    return int(v)


@dataclass(frozen=True)
class ArchitectureModel:
    id: str
    filename: str
    procedure: ProcedureSpec
    processors: tuple[tuple[str, str, str], ...]  # (label, component, instance-count key)
    basic: dict[str, int]
    scaled: dict[str, int]

    def model(self) -> Model:
        return parse_model(builtin_model_text(self.id))

    @property
    def config_schema(self) -> set[str]:
        rates, counts = free_names(self.model())
        return rates | counts

    def config(self, which: str = "basic", n: int = 1, **overrides) -> ExperimentConfig:
        counts = dict(self.basic if which == "basic" else self.scaled)
        cfg = ExperimentConfig(n=n, counts=counts)
        return cfg.updated(overrides) if overrides else cfg

    def processor_groups(self, config: ExperimentConfig, compiled: CompiledModel) -> list[ProcessorGroup]:
        groups = []
        for label, component, key in self.processors:
            g = compiled.group(component)
            capacity = config.counts[key] * config.counts[key + "p"]
            groups.append(ProcessorGroup(label, component, frozenset(g.labels[1:]), capacity))
        return groups


_IDLE = frozenset({"Ue1", "Ue1#1"})

REGISTRY: dict[str, ArchitectureModel] = {
    m.id: m
    for m in (
        ArchitectureModel(
            "proposed-pdu",
            "proposed_pdu.pepa",
            ProcedureSpec("rep_pduse", "Ue1", _IDLE),
            (("PSSFP", "Pssfp1", "N_pssf"), ("CONP", "Conp1", "N_con"), ("UPFP", "Upfp1", "N_upf")),
            {"N_pssf": 1, "N_con": 1, "N_upf": 1},
            {"N_pssf": 3, "N_con": 3, "N_upf": 1},
        ),
        ArchitectureModel(
            "fiveg-pdu",
            "fiveg_pdu.pepa",
            ProcedureSpec("rep_pduse", "Ue1", _IDLE),
            (("AMFP", "Amfp1", "N_amf"), ("SMFP", "Smfp1", "N_smf"), ("UPFP", "Upfp1", "N_upf")),
            {"N_amf": 1, "N_smf": 1, "N_upf": 1},
            {"N_amf": 3, "N_smf": 3, "N_upf": 1},
        ),
        ArchitectureModel(
            "proposed-mobility",
            "proposed_mobility.pepa",
            ProcedureSpec("session", "Ue1", _IDLE, "Upf1"),
            (
                ("UPTP", "Uptp1", "N_upt"),
                ("MSFP", "Msfp1", "N_msf"),
                ("RANP", "Ranp1", "N_ran"),
                ("CNP", "Cnp1", "N_cn"),
                ("UPFP", "Upfp1", "N_upf"),
            ),
            {"N_upt": 1, "N_msf": 2, "N_ran": 2, "N_cn": 1, "N_upf": 1},
            {"N_upt": 3, "N_msf": 6, "N_ran": 6, "N_cn": 3, "N_upf": 3},
        ),
        ArchitectureModel(
            "fiveg-mobility",
            "fiveg_mobility.pepa",
            ProcedureSpec("session", "Ue1", _IDLE, "Upf1"),
            (
                ("SDUP", "Sdup1", "N_sdu"),
                ("SCUP", "Scup1", "N_scu"),
                ("TDUP", "Tdup1", "N_tdu"),
                ("TCUP", "Tcup1", "N_tcu"),
                ("AMFP", "Amfp1", "N_amf"),
                ("SMFP", "Smfp1", "N_smf"),
                ("UPFP", "Upfp1", "N_upf"),
            ),
            {k: 1 for k in ("N_sdu", "N_scu", "N_tdu", "N_tcu", "N_amf", "N_smf", "N_upf")},
            {k: 3 for k in ("N_sdu", "N_scu", "N_tdu", "N_tcu", "N_amf", "N_smf", "N_upf")},
        ),
    )
}

PROCEDURES = {"pdu": ("proposed-pdu", "fiveg-pdu"), "mobility": ("proposed-mobility", "fiveg-mobility")}


def architecture(arch_id: str) -> ArchitectureModel:
    try:
        return REGISTRY[arch_id]
    except KeyError:
        raise UnknownModel(f"unknown model id {arch_id!r}; known: {', '.join(sorted(REGISTRY))}") from None


def models_dir() -> Path:
    env = os.environ.get(MODELS_ENV)
    return Path(env) if env else BUILTIN_DIR


def builtin_model_text(arch_id: str) -> SourceModel:
    return SourceModel.from_path(models_dir() / architecture(arch_id).filename)


@dataclass
class Instance:
    """A concrete, compiled built-in model ready for analysis."""

    arch: ArchitectureModel
    config: ExperimentConfig
    model: ConcreteModel
    compiled: CompiledModel
    procedure: ProcedureSpec
    groups: list[ProcessorGroup]


def instantiate(arch_id: str, config: ExperimentConfig) -> Instance:
    """Bind ``config`` into the built-in model ``arch_id`` and compile it."""
    arch = architecture(arch_id)
    model = arch.model()
    report = validate_model(model)
    if not report.ok:
        raise ValueError(f"{arch_id}: " + "; ".join(map(str, report)))
    concrete = bind_parameters(model, config)
    compiled = CompiledModel(concrete, check=False)
    return Instance(arch, config, concrete, compiled, arch.procedure, arch.processor_groups(config, compiled))
