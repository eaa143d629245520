"""
torus_forge/kam/jets.py — Derivadas en ω por cuadratura de Cauchy

∂^β f(ω₀) = β! ρ^{−|β|} · media_{φ} f(ω₀ + ρ e^{iφ}) e^{−i⟨β, φ⟩}
sobre el polidisco de radio ρ (trapecio con M nodos por eje, sólo en los ejes
donde β ≠ 0). Se calcula con ρ = h/4 y ρ = h/8; la discrepancia relativa se
compara con `tolerance`.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from torus_forge.errors import ContourTooLarge

logger = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray], np.ndarray]

JET_TOL = 1e-6


@dataclass
class JetTable:
    omega0: np.ndarray
    radius: float
    nodes: int
    values: dict[tuple[int, ...], np.ndarray] = field(default_factory=dict)
    consistency: float = 0.0
    tolerance: float = JET_TOL

    @property
    def consistent(self) -> bool:
        return self.consistency <= self.tolerance

    def __getitem__(self, beta: Sequence[int]) -> np.ndarray:
        return self.values[tuple(beta)]

    def orders(self) -> list[tuple[int, ...]]:
        return sorted(self.values, key=lambda b: (sum(b), b))

    def growth(self) -> dict[int, float]:
        """max |∂^β f| por orden |β|."""
        out: dict[int, float] = {}
        for beta, val in self.values.items():
            m = sum(beta)
            out[m] = max(out.get(m, 0.0), float(np.abs(val).max(initial=0.0)))
        return out


def multi_indices(n: int, max_order: int) -> list[tuple[int, ...]]:
    """Todos los β con |β| ≤ max_order, por orden creciente."""
    out = [b for b in itertools.product(range(max_order + 1), repeat=n) if sum(b) <= max_order]
    return sorted(out, key=lambda b: (sum(b), b))


def _cauchy(f: Evaluator, omega0: np.ndarray, betas: list[tuple[int, ...]], radius: float,
            nodes: int) -> dict[tuple[int, ...], np.ndarray]:
    out: dict[tuple[int, ...], np.ndarray] = {}
    groups: dict[tuple[int, ...], list[tuple[int, ...]]] = {}
    for beta in betas:
        support = tuple(i for i, b in enumerate(beta) if b)
        groups.setdefault(support, []).append(beta)

    phi = 2 * np.pi * np.arange(nodes) / nodes
    for support, members in groups.items():
        if not support:
            for beta in members:
                out[beta] = np.asarray(f(omega0.astype(complex)))
            continue
        acc = {beta: 0.0 for beta in members}
        for angles in itertools.product(range(nodes), repeat=len(support)):
            w = omega0.astype(complex)
            for axis, a in zip(support, angles):
                w[axis] += radius * np.exp(1j * phi[a])
            val = np.asarray(f(w))
            for beta in members:
                phase = sum(beta[axis] * phi[a] for axis, a in zip(support, angles))
                acc[beta] = acc[beta] + val * np.exp(-1j * phase)
        total = nodes ** len(support)
        for beta in members:
            fact = math.prod(math.factorial(b) for b in beta)
            out[beta] = acc[beta] / total * fact / radius ** sum(beta)
    return out


def jet_derivatives(
    f: Evaluator,
    omega0: Sequence[float],
    orders: int | Sequence[Sequence[int]],
    h: float,
    radius: float | None = None,
    nodes: int = 16,
    tolerance: float = JET_TOL,
) -> JetTable:
    """Tabla {β: ∂_ω^β f(ω₀)} con f analítica en el polidisco de radio h/2."""
    omega0 = np.asarray(omega0, dtype=float)
    n = omega0.shape[0]
    betas = multi_indices(n, orders) if isinstance(orders, int) else [tuple(b) for b in orders]
    radius = h / 4 if radius is None else radius
    if radius > h / 2:
        raise ContourTooLarge(radius, h / 2)
    if any(max(b, default=0) >= nodes for b in betas):
        raise ValueError(f"{nodes} nodos no alcanzan para orden {max(max(b) for b in betas)}")

    main = _cauchy(f, omega0, betas, radius, nodes)
    check = _cauchy(f, omega0, [b for b in betas if any(b)], radius / 2, nodes)
    worst = 0.0
    for beta, val in check.items():
        scale = max(float(np.abs(main[beta]).max(initial=0.0)), 1.0)
        worst = max(worst, float(np.abs(val - main[beta]).max(initial=0.0)) / scale)
    if worst > tolerance:
        logger.warning(f"Jet en ω₀={tuple(omega0)}: radios ρ y ρ/2 difieren en {worst:.2e} > {tolerance:.0e}")
    else:
        logger.debug(f"Jet en ω₀={tuple(omega0)}: {len(betas)} órdenes, discrepancia {worst:.2e}")
    return JetTable(omega0, radius, nodes, main, worst, tolerance)
