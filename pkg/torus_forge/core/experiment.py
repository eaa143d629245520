"""
torus_forge/core/experiment.py — Archivo de experimento (model.cfg)

Secciones INI leídas con configparser y validadas con Pydantic v2. Los
errores de validación salen como ConfigError con sección, campo y línea.
"""
from __future__ import annotations

import configparser
import logging
import re
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from torus_forge.errors import ConfigError
from torus_forge.kam.schedule import ANALYTIC, GEVREY
from torus_forge.model.family import perturbation_from_modes
from torus_forge.model.presets import IntegrableHamiltonian, get_preset
from torus_forge.series.fourier import FourierTaylor

logger = logging.getLogger(__name__)


def _parse_box(text: str) -> list[tuple[float, float]]:
    """"lo:hi, lo:hi" → [(lo, hi), ...]."""
    out = []
    for part in text.split(","):
        lo, hi = (float(x) for x in part.split(":"))
        if not lo < hi:
            raise ValueError(f"intervalo vacío {part.strip()}")
        out.append((lo, hi))
    return out


def _parse_points(text: str) -> list[list[float]]:
    """"a, b; c, d" → [[a, b], [c, d]]."""
    return [[float(x) for x in row.split(",")] for row in text.split(";") if row.strip()]


def _parse_modes(text: str) -> list[tuple[list[int], float]]:
    """"k1,k2:amp; ..." → [(k, amp), ...]."""
    out = []
    for item in text.split(";"):
        if not item.strip():
            continue
        k, amp = item.split(":")
        out.append(([int(x) for x in k.split(",")], float(amp)))
    return out


# ------------------------------------------------------------------
# Secciones
# ------------------------------------------------------------------

class ModelSection(BaseModel):
    n: int = Field(ge=1)
    preset: str = "quadratic"
    coupling: float = 0.0
    cubic: float = 0.1
    box: list[tuple[float, float]] | None = None
    modes: list[tuple[list[int], float]] = Field(default_factory=list)
    kind: str = "cos"
    eps_H: float | None = None

    @field_validator("box", mode="before")
    @classmethod
    def parse_box(cls, v: Any) -> Any:
        return _parse_box(v) if isinstance(v, str) else v

    @field_validator("modes", mode="before")
    @classmethod
    def parse_modes(cls, v: Any) -> Any:
        return _parse_modes(v) if isinstance(v, str) else v

    @field_validator("kind")
    @classmethod
    def check_kind(cls, v: str) -> str:
        if v not in ("cos", "sin"):
            raise ValueError("kind debe ser cos o sin")
        return v

    @model_validator(mode="after")
    def check_dims(self) -> "ModelSection":
        if self.box is not None and len(self.box) != self.n:
            raise ValueError(f"box tiene {len(self.box)} intervalos, n={self.n}")
        for k, _ in self.modes:
            if len(k) != self.n:
                raise ValueError(f"modo {k} no tiene dimensión {self.n}")
        return self


class FrequencySection(BaseModel):
    box: list[tuple[float, float]]
    kappa: float = Field(gt=0)
    tau: float
    k_scan: int = Field(default=200, ge=0)
    resolution: int = Field(default=5, ge=1)
    grid: list[list[float]] | None = None

    @field_validator("box", mode="before")
    @classmethod
    def parse_box(cls, v: Any) -> Any:
        return _parse_box(v) if isinstance(v, str) else v

    @field_validator("grid", mode="before")
    @classmethod
    def parse_grid(cls, v: Any) -> Any:
        return _parse_points(v) if isinstance(v, str) else v


class ScheduleSection(BaseModel):
    mode: str = GEVREY
    rho: float = 2.0
    tau_prime: float | None = None
    r0: float = 1e-3
    L1: float = 1.0
    L2: float = 1.0
    varsigma: float = 0.0
    c1: float = 2.0
    sigma: float = 0.1
    a_const: float = 2.0**-6
    b_const: float = 2.0**-6
    j_max: int = Field(default=20, ge=1)

    @field_validator("mode")
    @classmethod
    def check_mode(cls, v: str) -> str:
        if v not in (GEVREY, ANALYTIC):
            raise ValueError(f"modo desconocido: {v}")
        return v


class TolerancesSection(BaseModel):
    tol: float = 1e-11
    h: float = 0.1
    K_cap: int = Field(default=12, ge=1)
    levels: int = Field(default=12, ge=1)
    grid_size: int = Field(default=16, ge=4)
    jet_nodes: int = Field(default=8, ge=4)
    lagrangian: float = 1e-8
    eps_threshold: float = 1e-2
    flatness: float = 1e-6
    symplectic: float = 1e-8
    torus: float = 1e-8
    jet: float = 1e-6


class OutputSection(BaseModel):
    name: str = "run"
    drift_T: float = Field(default=50.0, gt=0)
    drift_records: int = Field(default=10, ge=1)
    drift_distance: float = 0.0
    stability_dmax: float = Field(default=1e-2, gt=0)
    stability_points: int = Field(default=100, ge=2)


class ExperimentConfig(BaseModel):
    model: ModelSection
    frequency: FrequencySection
    schedule: ScheduleSection = Field(default_factory=ScheduleSection)
    tolerances: TolerancesSection = Field(default_factory=TolerancesSection)
    output: OutputSection = Field(default_factory=OutputSection)
    source: str | None = None

    @model_validator(mode="after")
    def check_constraints(self) -> "ExperimentConfig":
        n = self.model.n
        if len(self.frequency.box) != n:
            raise ValueError(f"frequency.box tiene {len(self.frequency.box)} intervalos, n={n}")
        if self.frequency.tau <= n - 1:
            raise ValueError(f"τ={self.frequency.tau} debe ser > n−1={n - 1}")
        s = self.schedule
        if s.mode == GEVREY and s.rho <= 1:
            raise ValueError("el modo gevrey necesita ρ > 1")
        if s.mode == ANALYTIC and (s.tau_prime is None or s.tau_prime <= self.frequency.tau):
            raise ValueError("el modo analítico necesita τ′ > τ")
        limit = s.L2 ** (-1 - s.varsigma)
        if self.frequency.kappa > limit:
            raise ValueError(f"κ={self.frequency.kappa} > L₂^(−1−ς)={limit:.3e}")
        if self.frequency.grid is not None and any(len(w) != n for w in self.frequency.grid):
            raise ValueError("frequency.grid tiene puntos de dimensión distinta a n")
        return self

    # -- objetos del modelo ------------------------------------------

    def integrable(self) -> IntegrableHamiltonian:
        m = self.model
        params: dict[str, Any] = {}
        if m.box is not None:
            params["box"] = m.box
        if m.preset == "quadratic":
            params["coupling"] = m.coupling
        elif m.preset == "anharmonic":
            params["cubic"] = m.cubic
        return get_preset(m.preset, m.n, **params)

    def perturbation(self) -> FourierTaylor:
        return perturbation_from_modes(self.model.n, self.model.modes, self.model.kind)

    def resolved(self) -> dict[str, Any]:
        """Config completa para embeber en los reportes (sin la ruta de origen)."""
        return self.model_dump(mode="json", exclude={"source"})


# ------------------------------------------------------------------
# Carga
# ------------------------------------------------------------------

def _locate(lines: list[str], section: str, key: str) -> int | None:
    """Línea (1-based) de `key` dentro de `[section]`, o de la sección si falta la clave."""
    current = None
    header = None
    for number, line in enumerate(lines, start=1):
        stripped = line.strip()
        m = re.match(r"^\[(.+)\]$", stripped)
        if m:
            current = m.group(1).strip()
            if current == section:
                header = number
            continue
        if current == section and re.match(rf"^{re.escape(key)}\s*[=:]", stripped):
            return number
    return header


def parse_experiment(text: str, source: str | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source or "<string>")
    except configparser.Error as e:
        raise ConfigError(str(e), line=getattr(e, "lineno", None)) from e

    data: dict[str, Any] = {name: dict(parser[name]) for name in parser.sections()}
    lines = text.splitlines()
    try:
        return ExperimentConfig.model_validate({**data, "source": source})
    except ValidationError as e:
        first = e.errors()[0]
        loc = [str(p) for p in first["loc"]]
        section = loc[0] if loc else ""
        key = loc[1] if len(loc) > 1 else ""
        field = ".".join(loc[:2])
        line = _locate(lines, section, key) if section else None
        raise ConfigError(first["msg"], field=field, line=line) from e


def load_experiment(path: Path | str) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no existe {path}")
    exp = parse_experiment(path.read_text(), source=str(path))
    logger.info(f"Experimento {path.name}: n={exp.model.n}, modo {exp.schedule.mode}")
    return exp
