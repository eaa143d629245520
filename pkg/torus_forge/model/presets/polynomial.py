"""
torus_forge/model/presets/polynomial.py — H⁰ polinomial dado por coeficientes

Los términos son {exponente: coeficiente}, p. ej. {(2, 0): 0.5, (1, 1): 0.1}
para I₁²/2 + 0.1·I₁I₂.
"""
from __future__ import annotations

import logging
from typing import Mapping, Sequence

import numpy as np

from torus_forge.model.presets.base import GevreyData, IntegrableHamiltonian

logger = logging.getLogger(__name__)


def _as_point(z) -> np.ndarray:
    z = np.asarray(z)
    return z.astype(complex) if np.iscomplexobj(z) else z.astype(float)


class PolynomialHamiltonian(IntegrableHamiltonian):
    """Polinomio en las acciones con derivadas exactas."""

    def __init__(
        self,
        n: int,
        terms: Mapping[Sequence[int], float],
        box: Sequence[tuple[float, float]],
        gevrey: GevreyData | None = None,
    ):
        super().__init__(n, box, gevrey)
        self.exponents = np.array([tuple(e) for e in terms.keys()], dtype=int).reshape(-1, n)
        self.coefficients = np.array(list(terms.values()), dtype=float)
        if self.exponents.shape[0] == 0:
            raise ValueError("H⁰ sin términos")

    @property
    def degree(self) -> int:
        return int(self.exponents.sum(axis=1).max())

    def _monomials(self, z: np.ndarray, shift: np.ndarray) -> np.ndarray:
        """Π z_i^{e_i − shift_i}·(factor de bajada), por término. Acepta z complejo."""
        z = _as_point(z)
        out = self.coefficients.astype(z.dtype)
        for i in range(self.n):
            e = self.exponents[:, i]
            s = shift[i]
            falling = np.ones_like(out)
            for j in range(s):
                falling *= e - j
            power = np.where(e >= s, z[i] ** np.maximum(e - s, 0), 0.0)
            out = out * falling * power
        return out

    def _derivative(self, z: np.ndarray, shift: Sequence[int]) -> float | complex:
        total = self._monomials(z, np.asarray(shift)).sum()
        return complex(total) if np.iscomplexobj(total) else float(total)

    def value(self, z: np.ndarray) -> float | complex:
        return self._derivative(z, [0] * self.n)

    def gradient(self, z: np.ndarray) -> np.ndarray:
        g = np.zeros(self.n, dtype=_as_point(z).dtype)
        for i in range(self.n):
            shift = [0] * self.n
            shift[i] = 1
            g[i] = self._derivative(z, shift)
        return g

    def hessian(self, z: np.ndarray) -> np.ndarray:
        H = np.zeros((self.n, self.n), dtype=_as_point(z).dtype)
        for i in range(self.n):
            for j in range(i, self.n):
                shift = [0] * self.n
                shift[i] += 1
                shift[j] += 1
                H[i, j] = H[j, i] = self._derivative(z, shift)
        return H


def quadratic(
    n: int,
    coupling: float = 0.0,
    box: Sequence[tuple[float, float]] | None = None,
) -> PolynomialHamiltonian:
    """|I|²/2 + coupling·Σ_{i<j} I_iI_j."""
    terms: dict[tuple[int, ...], float] = {}
    for i in range(n):
        e = [0] * n
        e[i] = 2
        terms[tuple(e)] = 0.5
        for j in range(i + 1, n):
            if coupling:
                e = [0] * n
                e[i] = e[j] = 1
                terms[tuple(e)] = coupling
    box = box or [(-3.0, 3.0)] * n
    return PolynomialHamiltonian(n, terms, box, GevreyData(rho=1.0, L0=1.0, A0=1.0))


def anharmonic(
    n: int,
    cubic: float = 0.1,
    box: Sequence[tuple[float, float]] | None = None,
) -> PolynomialHamiltonian:
    """Σ I_i²/2 + cubic·I_i³/6; convexo mientras 1 + cubic·I_i > 0."""
    terms: dict[tuple[int, ...], float] = {}
    for i in range(n):
        e2 = [0] * n
        e2[i] = 2
        terms[tuple(e2)] = 0.5
        e3 = [0] * n
        e3[i] = 3
        terms[tuple(e3)] = cubic / 6
    if box is None:
        half = 0.5 / abs(cubic) if cubic else 3.0
        box = [(-min(half, 3.0), min(half, 3.0))] * n
    logger.debug(f"anharmonic n={n} cubic={cubic} box={box}")
    return PolynomialHamiltonian(n, terms, box, GevreyData(rho=1.0, L0=1.0, A0=1.0 + abs(cubic)))
