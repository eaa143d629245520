"""
torus_forge/certs/gevrey.py — Certificados Gevrey anisótropos y su cálculo

Un certificado (A, h₁, h₂, ρ, ρ′, ε) afirma
    |∂_x^α ∂_ω^β f| ≤ εA · h₁^{|α|} h₂^{|β|} · α!^ρ β!^{ρ′}.
Acá se propagan bajo composición y se validan contra derivadas muestreadas;
no hay prueba simbólica.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import signal

from torus_forge.errors import ExponentMismatch, SmallnessViolated

logger = logging.getLogger(__name__)


def multi_factorial(alpha: Sequence[int] | int) -> float:
    """α! = Π α_i! (acepta también un entero)."""
    if isinstance(alpha, int):
        return float(math.factorial(alpha))
    return float(math.prod(math.factorial(a) for a in alpha))


def _order(alpha: Sequence[int] | int) -> int:
    return alpha if isinstance(alpha, int) else sum(alpha)


@dataclass(frozen=True)
class GevreyCertificate:
    amplitude: float
    h1: float
    h2: float
    rho: float
    rho_prime: float
    eps: float = 1.0
    n: int = 1
    m: int = 1
    chain: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.rho_prime >= self.rho >= 1:
            raise ExponentMismatch(self.rho, self.rho_prime)
        if not 0 <= self.eps <= 1:
            raise ValueError("ε debe estar en [0, 1]")

    @property
    def norm(self) -> float:
        """εA, la amplitud efectiva."""
        return self.eps * self.amplitude

    def bound(self, alpha: Sequence[int] | int, beta: Sequence[int] | int = 0) -> float:
        return (
            self.norm
            * self.h1 ** _order(alpha)
            * self.h2 ** _order(beta)
            * multi_factorial(alpha) ** self.rho
            * multi_factorial(beta) ** self.rho_prime
        )

    def violations(
        self, samples: Mapping[tuple, float], slack: float = 1.0
    ) -> list[tuple[tuple, float, float]]:
        """samples: (α, β) → max|∂^α∂^β f| muestreado. Retorna las violaciones."""
        out = []
        for (alpha, beta), value in samples.items():
            limit = slack * self.bound(alpha, beta)
            if value > limit * (1 + 1e-12):
                out.append(((alpha, beta), value, limit))
        return out

    def dominates(self, samples: Mapping[tuple, float]) -> bool:
        return not self.violations(samples)

    def as_dict(self) -> dict:
        return asdict(self)


def sampled_norm(
    samples: Mapping[tuple, float], h1: float, h2: float, rho: float, rho_prime: float
) -> float:
    """Menor εA compatible con las derivadas muestreadas (cota inferior del sup real)."""
    best = 0.0
    for (alpha, beta), value in samples.items():
        scale = (
            h1 ** _order(alpha) * h2 ** _order(beta)
            * multi_factorial(alpha) ** rho * multi_factorial(beta) ** rho_prime
        )
        best = max(best, value / scale)
    return best


# ------------------------------------------------------------------
# Composición
# ------------------------------------------------------------------

def composition_factor(n: int, mu: float, C1: float, A1: float, C2: float) -> float:
    """2^{n+μ} n^μ C₁ max(1, A₁C₂)."""
    return 2.0 ** (n + mu) * n**mu * C1 * max(1.0, A1 * C2)


def compose_cert(outer: GevreyCertificate, inner_param: GevreyCertificate) -> GevreyCertificate:
    """F(x,ω) = f(x, g(ω)) con f ∈ G^{ρ,μ}_{B,C₂}, g ∈ G^μ_{C₁}; conserva la amplitud de f."""
    mu = outer.rho_prime
    if inner_param.rho_prime > mu:
        raise ExponentMismatch(inner_param.rho_prime, mu)
    A1 = inner_param.norm
    C1 = inner_param.h2
    C2 = outer.h2
    C = composition_factor(outer.n, mu, C1, A1, C2)
    chain = {"rule": "param", "n": outer.n, "mu": mu, "C1": C1, "A1": A1, "C2": C2, "C": C}
    logger.debug(f"compose_cert: {chain}")
    return replace(outer, h2=C, m=inner_param.m, chain=chain)


def compose_cert_joint(g_cert: GevreyCertificate, f_cert: GevreyCertificate) -> GevreyCertificate:
    """F(x,ω) = f(g(x,ω), ω): B = 2^{n+ρ}(2n)^ρ B₁ max(1, A₁B₂), C = C₂ + 2^{n+ρ}(2n)^ρ C₁ max(1, A₁B₂)."""
    if g_cert.rho > f_cert.rho:
        raise ExponentMismatch(g_cert.rho, f_cert.rho)
    if g_cert.rho_prime > f_cert.rho_prime:
        raise ExponentMismatch(g_cert.rho_prime, f_cert.rho_prime)
    n, rho = f_cert.n, f_cert.rho
    A1 = g_cert.norm
    common = 2.0 ** (n + rho) * (2 * n) ** rho * max(1.0, A1 * f_cert.h1)
    B = common * g_cert.h1
    C = f_cert.h2 + common * g_cert.h2
    chain = {
        "rule": "joint", "n": n, "rho": rho, "B1": g_cert.h1, "C1": g_cert.h2,
        "A1": A1, "B2": f_cert.h1, "C2": f_cert.h2, "B": B, "C": C,
    }
    logger.debug(f"compose_cert_joint: {chain}")
    return replace(f_cert, h1=B, h2=C, chain=chain)


# ------------------------------------------------------------------
# Constante H y serie mayorante
# ------------------------------------------------------------------

def _log_ratio(rho: float, q: int) -> float:
    """ln(M_q / q!) con M_q = q!^ρ."""
    return (rho - 1) * math.lgamma(q + 1)


def minimal_h_constant(rho: float, order_cap: int = 40) -> float:
    """Menor H ≥ 1 con (M_q/q!)^{1/(q−1)} ≤ H (M_p/p!)^{1/(p−1)} y (M_q/q!)^{1/q} ≤ H (M_p/p!)^{1/p}, 2 ≤ q ≤ p."""
    log_h = 0.0
    for p in range(2, order_cap + 1):
        lp = _log_ratio(rho, p)
        for q in range(2, p + 1):
            lq = _log_ratio(rho, q)
            log_h = max(log_h, lq / (q - 1) - lp / (p - 1), lq / q - lp / p)
    return math.exp(log_h)


@dataclass(frozen=True)
class MajorantTable:
    """v^{q,a}: derivadas en el origen de la mayorante escalar V(t, s)."""

    eps_A: float
    h: float
    n: int
    m: int
    rho: float
    rho_prime: float
    values: np.ndarray

    def coefficient(self, q: int, a: int = 0) -> float:
        return float(self.values[q, a])

    def rows(self) -> list[list]:
        Q = self.values.shape[0] - 1
        return [[q, a, repr(float(self.values[q, a]))] for q in range(2, Q + 1) for a in range(Q + 1)]


def majorant_solution(
    eps_A: float,
    h: float,
    n: int = 1,
    m: int = 1,
    rho: float = 1.0,
    rho_prime: float = 1.0,
    max_order: int = 8,
) -> MajorantTable:
    """Resuelve V = εA Σ_{q≥2,a≥0} (M_q/q!)(N_a/a!) h^{q+a} n^q m^a (t+V)^q s^a.

    Es la reducción escalar (y_i = t, ω_i = s) de la ecuación mayorante del
    teorema de funciones implícitas: por simetría todas las componentes
    coinciden y Σ_{|p|=q} y^p/p! = n^q t^q/q!.
    """
    if eps_A * h > 0.5:
        raise SmallnessViolated(eps_A * h)
    Q = max_order
    size = Q + 1
    c = np.array([
        eps_A * math.factorial(q) ** (rho - 1) * (h * n) ** q if q >= 2 else 0.0
        for q in range(size)
    ])
    S = np.zeros((size, size))
    S[0, :] = [math.factorial(a) ** (rho_prime - 1) * (h * m) ** a for a in range(size)]

    def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return signal.convolve2d(a, b)[:size, :size]

    V = np.zeros((size, size))
    T = np.zeros((size, size))
    T[1, 0] = 1.0
    # Cada pasada fija un orden más en t
    for _ in range(Q):
        W = T + V
        power = W.copy()
        acc = np.zeros((size, size))
        for q in range(2, size):
            power = mul(power, W)
            acc += c[q] * power
        V = mul(acc, S)
    fact = np.array([math.factorial(i) for i in range(size)], dtype=float)
    values = V * fact[:, None] * fact[None, :]
    return MajorantTable(eps_A, h, n, m, rho, rho_prime, values)
