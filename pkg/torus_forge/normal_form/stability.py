"""
torus_forge/normal_form/stability.py — Cota de estabilidad efectiva

Expandiendo ∂_φ^α ∂_I^β R en Taylor de orden m alrededor de un I₀ ∈ E_κ,
con x = κC₂⁻¹·d la distancia escalada y γ = ρ(τ+1) = ρ′ − 1:

    |∂_φ^α ∂_I^β R| ≤ pref · min_m x^m m!^γ
    pref = κA·C₁^{|α|}·(C₂κ⁻¹)^{|β|}·α!^ρ·β!^{ρ′}

Stirling en m* = x^{−1/γ} da la forma cerrada pref·e^{−γm*}(2πm*)^{γ/2},
que decae como exp(−x^{−1/γ}) salvo constantes en el exponente.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

logger = logging.getLogger(__name__)

DISCRETE_ORDERS = 200


@dataclass(frozen=True)
class StabilityBound:
    distance: float
    value: float
    discrete: float
    exponential: float
    exponent_index: float
    m_star: float

    @property
    def ratio(self) -> float:
        """forma cerrada / mínimo discreto."""
        if self.discrete == 0:
            return math.inf if self.value else 1.0
        return self.value / self.discrete


def _multi_factorial(index: Sequence[int]) -> float:
    return math.prod(math.factorial(int(i)) for i in index)


def stability_bound(
    d: float,
    kappa: float,
    C2: float,
    rho: float,
    tau: float,
    alpha: Sequence[int] = (),
    beta: Sequence[int] = (),
    A: float = 1.0,
    C1: float = 1.0,
    orders: int = DISCRETE_ORDERS,
) -> StabilityBound:
    """Cota de |∂_φ^α ∂_I^β R(φ, I)| a distancia d de E_κ."""
    if d <= 0:
        raise ValueError(f"la distancia debe ser > 0 (d={d})")
    gamma = rho * (tau + 1)
    rho_prime = gamma + 1
    na, nb = sum(alpha), sum(beta)
    pref = (kappa * A * C1**na * (C2 / kappa) ** nb
            * _multi_factorial(alpha) ** rho * _multi_factorial(beta) ** rho_prime)

    x = kappa * d / C2
    m_star = x ** (-1.0 / gamma)
    if m_star <= 0.5:
        closed = 1.0
    else:
        closed = min(1.0, math.exp(-gamma * m_star + 0.5 * gamma * math.log(2 * math.pi * m_star)))

    m = np.arange(orders + 1)
    log_terms = m * math.log(x) + gamma * gammaln(m + 1)
    discrete = float(np.exp(log_terms.min()))

    bound = StabilityBound(
        distance=d,
        value=pref * closed,
        discrete=pref * discrete,
        exponential=pref * math.exp(-m_star),
        exponent_index=gamma,
        m_star=m_star,
    )
    logger.debug(
        f"Estabilidad d={d:.2e}: m*={m_star:.2f}, cerrada {bound.value:.3e}, "
        f"discreta {bound.discrete:.3e} (cociente {bound.ratio:.2f})"
    )
    return bound


def stability_profile(distances: Sequence[float], kappa: float, C2: float, rho: float, tau: float,
                      **kwargs) -> list[StabilityBound]:
    return [stability_bound(d, kappa, C2, rho, tau, **kwargs) for d in distances]
