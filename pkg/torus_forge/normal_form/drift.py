"""
torus_forge/normal_form/drift.py — Experimento de deriva de acciones

Integra H = H⁰(y) + V(x) con una composición simétrica de octavo orden del
leapfrog (15 etapas) y mide sup_{t≤T} |J(t) − J(0)| en las coordenadas
normales J = (χ⁻¹)_J. Sólo para H¹ sin dependencia en las acciones.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from torus_forge.errors import NotSeparable, StepTooLarge
from torus_forge.model.presets.base import IntegrableHamiltonian
from torus_forge.series.fourier import FourierTaylor

if TYPE_CHECKING:
    from torus_forge.normal_form.generating import NormalForm

logger = logging.getLogger(__name__)

# Pesos w₁..w₇ de la composición de octavo orden; w₀ = 1 − 2Σw
_W = (
    -1.61582374150097,
    -2.44699182370524,
    -0.00716989419708120,
    2.44002732616735,
    0.157739928123617,
    1.82020630970714,
    1.04242620869991,
)
YOSHIDA8 = tuple(reversed(_W)) + (1.0 - 2.0 * sum(_W),) + _W

STEP_FRACTION = 0.01


@dataclass
class SeparableHamiltonian:
    """H⁰(y) + V(x) con V = H¹ de grado 0 en las acciones."""

    kinetic: IntegrableHamiltonian
    potential: FourierTaylor
    modes: np.ndarray = field(init=False, repr=False)
    coeffs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.potential.degree > 0:
            raise NotSeparable()
        if self.potential.n != self.kinetic.n:
            raise ValueError(f"H¹ tiene n={self.potential.n}, H⁰ tiene n={self.kinetic.n}")
        table = self.potential.coeffs[..., 0]
        rows = np.argwhere(table != 0)
        self.modes = (rows - self.potential.K).reshape(-1, self.n)
        self.coeffs = table[tuple(rows.T)]
        self._linear = getattr(self.kinetic, "degree", None) is not None and self.kinetic.degree <= 2
        if self._linear:
            zero = np.zeros(self.n)
            self._g0 = np.real(self.kinetic.gradient(zero))
            self._hess = np.real(self.kinetic.hessian(zero))

    @classmethod
    def from_normal_form(cls, nf: "NormalForm") -> "SeparableHamiltonian":
        return cls(nf.H0, nf.H1)

    @property
    def n(self) -> int:
        return self.kinetic.n

    def kinetic_gradient(self, y: np.ndarray) -> np.ndarray:
        if self._linear:
            return self._g0[None, :] + y @ self._hess.T
        return np.stack([np.real(self.kinetic.gradient(row)) for row in y])

    def potential_gradient(self, x: np.ndarray) -> np.ndarray:
        if not self.coeffs.size:
            return np.zeros_like(x)
        E = np.exp(1j * x @ self.modes.T) * self.coeffs[None, :]
        return (E @ (1j * self.modes)).real

    def energy(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        kinetic = np.array([float(np.real(self.kinetic.value(row))) for row in y])
        if not self.coeffs.size:
            return kinetic
        return kinetic + (np.exp(1j * x @ self.modes.T) @ self.coeffs).real

    def leapfrog(self, x: np.ndarray, y: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
        y = y - 0.5 * h * self.potential_gradient(x)
        x = x + h * self.kinetic_gradient(y)
        y = y - 0.5 * h * self.potential_gradient(x)
        return x, y

    def step(self, x: np.ndarray, y: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
        for w in YOSHIDA8:
            x, y = self.leapfrog(x, y, w * h)
        return x, y

    def step_limit(self, y: np.ndarray) -> float:
        """0.01/|ω| con ω la frecuencia más rápida entre los arranques."""
        fastest = float(np.abs(self.kinetic_gradient(np.atleast_2d(y))).max(initial=0.0))
        return math.inf if fastest == 0 else STEP_FRACTION / fastest

    def integrate(self, x: np.ndarray, y: np.ndarray, T: float, h: float) -> tuple[np.ndarray, np.ndarray]:
        """Avanza hasta T con pasos iguales ≤ h."""
        if T <= 0:
            return x, y
        steps = max(1, math.ceil(T / h - 1e-12))
        dt = T / steps
        for _ in range(steps):
            x, y = self.step(x, y, dt)
        return x, y


@dataclass
class DriftTrace:
    times: np.ndarray
    drift: np.ndarray
    energy_error: np.ndarray
    starts: np.ndarray
    step: float

    @property
    def max_drift(self) -> float:
        return float(self.drift.max(initial=0.0))

    @property
    def max_energy_error(self) -> float:
        return float(self.energy_error.max(initial=0.0))

    def onset_time(self, threshold: float, start: int = 0) -> float:
        """Primer tiempo registrado con deriva > threshold; inf si no ocurre."""
        above = np.flatnonzero(self.drift[:, start] > threshold)
        return float(self.times[above[0]]) if above.size else math.inf

    def rows(self) -> list[dict]:
        out = []
        for i, t in enumerate(self.times):
            for s in range(self.drift.shape[1]):
                out.append({
                    "time": float(t),
                    "start": s,
                    "drift": float(self.drift[i, s]),
                    "energy_error": float(self.energy_error[i, s]),
                })
        return out


def drift_experiment(
    nf: "NormalForm",
    starts: np.ndarray,
    T_max: float,
    h: float | None = None,
    records: int = 20,
) -> DriftTrace:
    """Deriva de J desde arranques (φ, J) en coordenadas normales."""
    n = nf.n
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    system = SeparableHamiltonian.from_normal_form(nf)
    points = np.concatenate([nf.chi(s[None, :n], s[n:]) for s in starts])
    x, y = points[:, :n], points[:, n:]

    limit = system.step_limit(y)
    h = limit if h is None else h
    if h > limit:
        raise StepTooLarge(h, limit)

    times = np.linspace(0.0, T_max, records + 1)
    J0 = nf.chi_inverse(points)[:, n:]
    E0 = system.energy(x, y)
    scale = np.maximum(np.abs(E0), 1e-300)
    drift = np.zeros((records + 1, len(starts)))
    energy = np.zeros_like(drift)
    for i in range(1, records + 1):
        x, y = system.integrate(x, y, times[i] - times[i - 1], h)
        J = nf.chi_inverse(np.concatenate([x, y], axis=1))[:, n:]
        drift[i] = np.maximum(drift[i - 1], np.abs(J - J0).max(axis=1))
        energy[i] = np.maximum(energy[i - 1], np.abs(system.energy(x, y) - E0) / scale)
        logger.debug(f"t={times[i]:.3g}: deriva {drift[i].max():.3e}, energía {energy[i].max():.3e}")
    logger.info(
        f"Deriva: {len(starts)} arranques hasta T={T_max:g} (h={h:.2e}), "
        f"máx {drift.max():.3e}, error de energía {energy.max():.3e}"
    )
    return DriftTrace(times, drift, energy, starts, h)
