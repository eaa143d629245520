"""
torus_forge/model/presets/base.py — Interface base para la parte integrable H⁰(I)
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class GevreyData:
    """Constantes declaradas (ρ, L₀, A₀) de H⁰ sobre D⁰."""
    rho: float = 1.0
    L0: float = 1.0
    A0: float = 1.0


class IntegrableHamiltonian(ABC):
    """Interface que todo H⁰ debe implementar: valor, gradiente y Hessiana en D⁰."""

    def __init__(self, n: int, box: Sequence[tuple[float, float]], gevrey: GevreyData | None = None):
        if len(box) != n:
            raise ValueError(f"D⁰ debe tener {n} intervalos")
        self.n = n
        self.box = tuple((float(lo), float(hi)) for lo, hi in box)
        self.gevrey = gevrey or GevreyData()

    @abstractmethod
    def value(self, z: np.ndarray) -> float:
        ...

    @abstractmethod
    def gradient(self, z: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def hessian(self, z: np.ndarray) -> np.ndarray:
        ...

    def contains(self, z: np.ndarray, margin: float = 0.0) -> bool:
        return all(lo + margin <= x <= hi - margin for x, (lo, hi) in zip(z, self.box))

    def center(self) -> np.ndarray:
        return np.array([(lo + hi) / 2 for lo, hi in self.box])

    def check_nondegenerate(self, points: np.ndarray, floor: float = 1e-8) -> float:
        """min |det ∇²H⁰| sobre los puntos dados; ValueError si cae bajo `floor`."""
        dets = [abs(np.linalg.det(self.hessian(p))) for p in np.atleast_2d(points)]
        worst = float(min(dets))
        if worst < floor:
            raise ValueError(f"H⁰ degenerado: |det ∇²H⁰| = {worst:.3e} < {floor:.1e}")
        return worst

    @property
    def name(self) -> str:
        return self.__class__.__name__
