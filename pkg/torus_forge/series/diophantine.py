"""
torus_forge/series/diophantine.py — Conjuntos de frecuencias Ω y Ω_κ por barrido de divisores

min_divisor recorre todos los k con 0 < |k|₁ ≤ K_scan. El producto ⟨ω,k⟩ se
acumula coordenada por coordenada y el peso |k|^τ se calcula una vez por
orden, así el resultado no depende del orden del barrido.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from torus_forge.errors import EmptyWindow

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiophantineParams:
    """κ > 0, τ > n−1, K_scan: certificado "hasta el corte"."""

    kappa: float
    tau: float
    n: int
    k_scan: int = 200

    def __post_init__(self):
        if self.tau <= self.n - 1:
            raise ValueError(f"τ={self.tau} debe ser > n−1={self.n - 1}")
        if self.kappa < 0:
            raise ValueError("κ debe ser ≥ 0")
        if self.k_scan < 0:
            raise ValueError("K_scan debe ser ≥ 0")


@dataclass(frozen=True)
class WindowPoint:
    omega: tuple[float, ...]
    boundary_distance: float
    min_divisor: float
    passes: bool

    def row(self) -> list:
        return [repr(w) for w in self.omega] + [
            repr(self.boundary_distance), repr(self.min_divisor), str(self.passes).lower()
        ]


@dataclass
class FrequencyWindow:
    box: tuple[tuple[float, float], ...]
    resolution: int
    params: DiophantineParams
    points: list[WindowPoint] = field(default_factory=list)

    @property
    def passing(self) -> list[WindowPoint]:
        return [p for p in self.points if p.passes]

    @property
    def passing_fraction(self) -> float:
        """Estimación de la medida relativa de Ω_κ en la caja."""
        return len(self.passing) / len(self.points) if self.points else 0.0

    def rows(self) -> list[list]:
        return [p.row() for p in self.points]

    def header(self) -> list[str]:
        n = len(self.box)
        return [f"omega{i + 1}" for i in range(n)] + ["boundary_dist", "min_div", "passes"]


# ------------------------------------------------------------------
# Divisores
# ------------------------------------------------------------------

def _order_weight(order: int, tau: float) -> float:
    return float(order) ** tau


def min_divisor(omega: Sequence[float], tau: float, k_scan: int) -> float:
    """min_{0<|k|≤K_scan} |⟨ω,k⟩|·|k|^τ; +inf si K_scan = 0."""
    omega = [float(w) for w in omega]
    n = len(omega)
    if k_scan <= 0:
        return math.inf
    # Mínimo |⟨ω,k⟩| por orden |k|₁
    best = np.full(k_scan + 1, np.inf)
    rest = np.arange(-k_scan, k_scan + 1)
    tail = np.meshgrid(*([rest] * (n - 1)), indexing="ij") if n > 1 else []
    tail_order = sum(np.abs(t) for t in tail) if n > 1 else np.zeros((), dtype=int)
    for k1 in range(-k_scan, k_scan + 1):
        dot = k1 * omega[0]
        if n > 1:
            dot = np.full(tail[0].shape, dot)
            for i, t in enumerate(tail, start=1):
                dot = dot + t * omega[i]
        order = abs(k1) + tail_order
        mask = (order > 0) & (order <= k_scan)
        if not np.any(mask):
            continue
        vals = np.abs(np.asarray(dot))[mask] if n > 1 else np.array([abs(dot)])
        ords = np.asarray(order)[mask] if n > 1 else np.array([order])
        np.minimum.at(best, ords, vals)
    result = math.inf
    for o in range(1, k_scan + 1):
        if np.isfinite(best[o]):
            result = min(result, float(best[o]) * _order_weight(o, tau))
    return result


def boundary_distance(omega: Sequence[float], box: Sequence[tuple[float, float]]) -> float:
    """Distancia (sup) de ω al borde de la caja; negativa fuera."""
    return float(min(min(w - lo, hi - w) for w, (lo, hi) in zip(omega, box)))


def grid_points(box: Sequence[tuple[float, float]], resolution: int) -> list[tuple[float, ...]]:
    """Grilla tensorial con `resolution` puntos por eje, en orden lexicográfico."""
    if resolution < 2:
        raise ValueError("resolution debe ser ≥ 2")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in box]
    return [tuple(float(x) for x in p) for p in itertools.product(*axes)]


def build_window(
    box: Sequence[tuple[float, float]],
    kappa: float,
    tau: float,
    k_scan: int,
    resolution: int,
) -> FrequencyWindow:
    """Etiqueta cada punto de la grilla; EmptyWindow si ninguno pasa."""
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    params = DiophantineParams(kappa=kappa, tau=tau, n=len(box), k_scan=k_scan)
    window = FrequencyWindow(box=box, resolution=resolution, params=params)
    for omega in grid_points(box, resolution):
        dist = boundary_distance(omega, box)
        # El barrido caro sólo hace falta si el borde ya pasa
        mdiv = min_divisor(omega, tau, k_scan) if dist >= kappa else math.nan
        passes = bool(dist >= kappa and mdiv >= kappa)
        window.points.append(WindowPoint(omega, dist, mdiv, passes))
    logger.info(
        f"Ventana {box}: {len(window.passing)}/{len(window.points)} puntos en Ω_κ "
        f"(κ={kappa:g}, τ={tau:g}, K_scan={k_scan})"
    )
    if not window.passing:
        raise EmptyWindow(kappa, len(window.points))
    return window
