"""
torus_forge/report/models.py — Modelos Pydantic v2 de los reportes
"""
from __future__ import annotations

from enum import Enum
from typing import Any, Literal

from pydantic import BaseModel, Field


class ReportKind(str, Enum):
    DIOPH = "dioph"
    SCHEDULE = "schedule"
    STEP = "step"
    RUN = "run"
    APPROX = "approx"
    WHITNEY = "whitney"
    NORMAL_FORM = "normalform"
    STABILITY = "stability"
    CERT = "cert"


class Report(BaseModel):
    """Reporte base: config resuelta para procedencia y banderas de validez."""

    kind: ReportKind
    config: dict[str, Any] = Field(default_factory=dict)
    flags: dict[str, bool] = Field(default_factory=dict)

    model_config = {"use_enum_values": True}

    @property
    def ok(self) -> bool:
        return all(self.flags.values())

    def failing(self) -> list[str]:
        return sorted(name for name, passed in self.flags.items() if not passed)


class DiophReport(Report):
    kind: Literal[ReportKind.DIOPH] = ReportKind.DIOPH
    box: list[list[float]]
    kappa: float
    tau: float
    k_scan: int
    resolution: int
    total: int
    passing: int
    passing_fraction: float


class ScheduleReport(Report):
    kind: Literal[ReportKind.SCHEDULE] = ReportKind.SCHEDULE
    mode: str
    sigma: float
    sigma0: float
    delta: float
    B: float
    levels: int
    rho_eff: float
    rho_prime: float
    max_h_ratio: float


class StepReport(Report):
    kind: Literal[ReportKind.STEP] = ReportKind.STEP
    omega: list[float]
    K: int
    sigma: float
    eta: float
    eps: float
    p_plus: float
    deformation: float
    phi_shift: float
    residual_before: float
    residual_after: float
    error_ratio: float
    deformation_ratio: float


class FrequencyRun(BaseModel):
    """Una frecuencia de la grilla: historia de residuos y verificaciones."""

    omega: list[float]
    xi: list[float]
    levels: int
    residuals: list[float]
    template_log_ratios: list[float] = Field(default_factory=list)
    contraction_exponent: float | None = None
    conjugacy: float | None = None
    invariance: float | None = None
    symplectic: float | None = None
    truncation: float | None = None


class RunReport(Report):
    kind: Literal[ReportKind.RUN] = ReportKind.RUN
    mode: str
    sigma: float
    runs: list[FrequencyRun] = Field(default_factory=list)
    jet_orders: int = 0
    jet_consistency: list[float] = Field(default_factory=list)


class ApproxReport(Report):
    kind: Literal[ReportKind.APPROX] = ReportKind.APPROX
    rho: float
    levels: int
    rate_slope: float | None = None
    rate_r2: float | None = None
    max_dbar_defect: float = 0.0


class WhitneyReport(Report):
    kind: Literal[ReportKind.WHITNEY] = ReportKind.WHITNEY
    points: int
    m_max: int
    constants: dict[str, float]
    compatibility: float
    roundtrip_error: float
    mode_radius: float
    modes: int
    growth: dict[str, float] = Field(default_factory=dict)


class NormalFormReport(Report):
    kind: Literal[ReportKind.NORMAL_FORM] = ReportKind.NORMAL_FORM
    eps_H: float
    radius: float
    degenerate: bool
    template_ratio: float
    lagrangian_defect: float
    gradient_residual: float
    compatibility: float
    period_defect: float = 0.0
    degeneracy: float
    flat_remainder: float
    flat_derivative: float
    torus_defect: float
    symplectic: float
    drift_max: float | None = None
    energy_error: float | None = None
    drift_offsets: list[float] = Field(default_factory=list)
    drift_onsets: list[list[float | None]] = Field(default_factory=list)
    constants: dict[str, float] = Field(default_factory=dict)


class StabilityPoint(BaseModel):
    distance: float
    value: float
    discrete: float
    ratio: float


class StabilityReport(Report):
    kind: Literal[ReportKind.STABILITY] = ReportKind.STABILITY
    kappa: float
    C2: float
    rho: float
    tau: float
    exponent_index: float
    points: list[StabilityPoint] = Field(default_factory=list)
    max_ratio: float = 1.0


class CertReport(Report):
    kind: Literal[ReportKind.CERT] = ReportKind.CERT
    operation: str
    certificate: dict[str, Any] = Field(default_factory=dict)
    chain: dict[str, Any] = Field(default_factory=dict)
    extra: dict[str, Any] = Field(default_factory=dict)


def parse_report(data: dict[str, Any]) -> Report:
    """Parsea un dict a la subclase correcta según el campo kind."""
    kind = data.get("kind")
    mapping = {
        ReportKind.DIOPH: DiophReport,
        ReportKind.SCHEDULE: ScheduleReport,
        ReportKind.STEP: StepReport,
        ReportKind.RUN: RunReport,
        ReportKind.APPROX: ApproxReport,
        ReportKind.WHITNEY: WhitneyReport,
        ReportKind.NORMAL_FORM: NormalFormReport,
        ReportKind.STABILITY: StabilityReport,
        ReportKind.CERT: CertReport,
    }
    try:
        cls = mapping[ReportKind(kind)]
    except ValueError as e:
        raise ValueError(f"tipo de reporte desconocido: {kind}") from e
    return cls.model_validate(data)
