"""
torus_forge/model/family.py — Familia parametrizada por la frecuencia

H(θ, z₀(ω)+I) = e(ω) + ⟨ω, I⟩ + P_{H⁰}(I; ω) + P_{H¹}(θ, I; ω), con z₀(ω) el
punto de Legendre (∇H⁰(z₀) = ω). El resto integral
    P_{H⁰}(I) = ∫₀¹ (1−t) ⟨∇²H⁰(z₀+tI) I, I⟩ dt
se evalúa por Gauss–Legendre de 16 nodos; la serie que consume el motor
KAM guarda su truncación cuadrática ½⟨∇²H⁰(z₀) I, I⟩; `truncation_error`
mide lo que queda afuera sobre las acciones del toro.
"""
from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from torus_forge.errors import NoConvergence, RadiusTooLarge
from torus_forge.model.presets.base import IntegrableHamiltonian
from torus_forge.series.diophantine import boundary_distance
from torus_forge.series.fourier import FourierTaylor, strip_sup_bound

logger = logging.getLogger(__name__)

GAUSS_NODES = 16


@lru_cache(maxsize=8)
def _gauss_unit(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodos y pesos de Gauss–Legendre en [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    return (x + 1) / 2, w / 2


# ------------------------------------------------------------------
# Transformada de Legendre
# ------------------------------------------------------------------

def legendre_point(
    H0: IntegrableHamiltonian,
    omega: Sequence[float],
    z_init: Sequence[float] | None = None,
    tol: float = 1e-12,
    max_iter: int = 60,
    det_floor: float = 1e-12,
) -> np.ndarray:
    """Newton amortiguado para ∇H⁰(z) = ω dentro de D⁰.

    Con ω complejo (contornos de Cauchy en ω) usa Newton sin amortiguar desde
    z_init, sin chequeo de caja.
    """
    if np.iscomplexobj(np.asarray(omega)):
        return _complex_legendre_point(H0, np.asarray(omega, dtype=complex), z_init, tol, max_iter)
    omega = np.asarray(omega, dtype=float)
    z = H0.center() if z_init is None else np.asarray(z_init, dtype=float)
    res = H0.gradient(z) - omega
    norm = float(np.abs(res).max())
    for _ in range(max_iter):
        if norm <= tol:
            return z
        hess = H0.hessian(z)
        if abs(np.linalg.det(hess)) < det_floor:
            raise NoConvergence(f"Hessiana singular en z={z}", norm)
        step = np.linalg.solve(hess, res)
        lam = 1.0
        while lam > 1e-10:
            trial = z - lam * step
            if H0.contains(trial):
                trial_res = H0.gradient(trial) - omega
                trial_norm = float(np.abs(trial_res).max())
                if trial_norm < norm:
                    break
            lam /= 2
        else:
            raise NoConvergence(f"ω={tuple(omega)} fuera de ∇H⁰(D⁰)", norm)
        z, res, norm = trial, trial_res, trial_norm
    if norm <= tol:
        return z
    raise NoConvergence(f"Newton agotó {max_iter} iteraciones para ω={tuple(omega)}", norm)


def _complex_legendre_point(
    H0: IntegrableHamiltonian,
    omega: np.ndarray,
    z_init: Sequence[float] | None,
    tol: float,
    max_iter: int,
) -> np.ndarray:
    z = (H0.center() if z_init is None else np.asarray(z_init)).astype(complex)
    for _ in range(max_iter):
        res = H0.gradient(z) - omega
        if float(np.abs(res).max()) <= tol:
            return z
        z = z - np.linalg.solve(H0.hessian(z), res)
    norm = float(np.abs(H0.gradient(z) - omega).max())
    if norm <= tol:
        return z
    raise NoConvergence(f"Newton complejo no convergió para ω={tuple(omega)}", norm)


# ------------------------------------------------------------------
# Expansión alrededor de z₀(ω)
# ------------------------------------------------------------------

def quadratic_series(n: int, A: np.ndarray) -> FourierTaylor:
    """½⟨A I, I⟩ como serie de grado 2."""
    terms = []
    for i in range(n):
        for j in range(i, n):
            m = [0] * n
            m[i] += 1
            m[j] += 1
            c = A[i, i] / 2 if i == j else A[i, j]
            terms.append(((0,) * n, tuple(m), c))
    return FourierTaylor.from_terms(n, terms, K=0)


def linear_series(n: int, c: Sequence[float]) -> FourierTaylor:
    """⟨c, I⟩."""
    terms = []
    for i in range(n):
        m = [0] * n
        m[i] = 1
        terms.append(((0,) * n, tuple(m), c[i]))
    return FourierTaylor.from_terms(n, terms, K=0)


@dataclass
class FamilyMember:
    """Expansión de H en torno a z₀(ω)."""

    omega: np.ndarray
    z0: np.ndarray
    e: float
    hessian: np.ndarray
    perturbation: FourierTaylor
    H0: IntegrableHamiltonian = field(repr=False)

    def remainder(self, actions: np.ndarray) -> np.ndarray:
        """P_{H⁰}(I) exacto por cuadratura del resto integral."""
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        t, w = _gauss_unit(GAUSS_NODES)
        out = np.zeros(actions.shape[0])
        for p, I in enumerate(actions):
            acc = 0.0
            for tk, wk in zip(t, w):
                hess = self.H0.hessian(self.z0 + tk * I)
                acc += wk * (1 - tk) * float(I @ hess @ I)
            out[p] = acc
        return out

    def truncation_error(self, actions: np.ndarray) -> float:
        """max |P_{H⁰}(I) − ½⟨∇²H⁰(z₀) I, I⟩|: lo que la serie cuadrática no ve."""
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        if actions.shape[0] == 0:
            return 0.0
        quad = 0.5 * np.einsum("pi,ij,pj->p", actions, np.real(self.hessian), actions)
        return float(np.abs(self.remainder(actions) - quad).max())

    def series(self) -> FourierTaylor:
        """e + ⟨ω, I⟩ + ½⟨∇²H⁰(z₀) I, I⟩ + P_{H¹}(θ, I)."""
        n = len(self.omega)
        return (
            FourierTaylor.constant(n, self.e)
            + linear_series(n, self.omega)
            + quadratic_series(n, self.hessian)
            + self.perturbation
        )

    def evaluate(self, theta: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """e + ⟨ω,I⟩ + P(θ, I) con el resto integral completo."""
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        lin = actions @ self.omega
        return self.e + lin + self.remainder(actions) + self.perturbation.evaluate(theta, actions).real


def expand_member(
    H0: IntegrableHamiltonian,
    H1: FourierTaylor,
    omega: Sequence[float],
    R: float = 0.0,
    z_init: Sequence[float] | None = None,
) -> FamilyMember:
    omega = np.asarray(omega)
    omega = omega.astype(complex) if np.iscomplexobj(omega) else omega.astype(float)
    z0 = legendre_point(H0, omega, z_init=z_init)
    if R > 0 and not np.iscomplexobj(z0) and boundary_distance(z0, H0.box) < R:
        raise RadiusTooLarge(R, tuple(float(w) for w in omega))
    return FamilyMember(
        omega=omega,
        z0=z0,
        e=H0.value(z0),
        hessian=H0.hessian(z0),
        perturbation=H1.shift_actions(z0),
        H0=H0,
    )


# ------------------------------------------------------------------
# Familias
# ------------------------------------------------------------------

class HamiltonianFamily(ABC):
    """Familia ξ ↦ H(θ, I; ξ) en coordenadas centradas en el toro de ξ."""

    n: int

    @abstractmethod
    def member(self, xi: Sequence[float]) -> FourierTaylor:
        ...

    @abstractmethod
    def perturbation(self, xi: Sequence[float]) -> FourierTaylor:
        """Parte dependiente de θ del miembro (la que aproxima el esquema Gevrey)."""

    def frequency_model(self, xi: Sequence[float]) -> np.ndarray:
        """Frecuencia promedio [∂_I H](ξ) del miembro sin transformar."""
        avg = self.member(xi).average_linear()
        return avg if np.iscomplexobj(np.asarray(xi)) else avg.real


class ParamFamily(HamiltonianFamily):
    """Familia con torsión: cada ξ se expande en su punto de Legendre."""

    def __init__(
        self,
        H0: IntegrableHamiltonian,
        H1: FourierTaylor,
        members: list[FamilyMember],
        R: float,
        norm_bound: float,
    ):
        self.n = H0.n
        self.H0 = H0
        self.H1 = H1
        self.members = members
        self.R = R
        self.norm_bound = norm_bound
        self._cache: dict[tuple, FamilyMember] = {}

    @property
    def omegas(self) -> list[np.ndarray]:
        return [m.omega for m in self.members]

    def expansion(self, xi: Sequence[float]) -> FamilyMember:
        xi = np.asarray(xi)
        key = tuple(complex(x) if np.iscomplexobj(xi) else float(x) for x in xi)
        if key not in self._cache:
            real = np.asarray(key).real
            near = min(self.members, key=lambda m: float(np.abs(m.omega - real).max()), default=None)
            z_init = near.z0 if near is not None else None
            self._cache[key] = expand_member(self.H0, self.H1, np.asarray(key), z_init=z_init)
        return self._cache[key]

    def member(self, xi: Sequence[float]) -> FourierTaylor:
        return self.expansion(xi).series()

    def perturbation(self, xi: Sequence[float]) -> FourierTaylor:
        return self.expansion(xi).perturbation


class LinearFamily(HamiltonianFamily):
    """Familia congelada: ⟨ξ, I⟩ + P(θ, I) con P fijo."""

    def __init__(self, perturbation: FourierTaylor, base: FourierTaylor | None = None):
        self.n = perturbation.n
        self._perturbation = perturbation
        self.base = base if base is not None else FourierTaylor.zeros(self.n)

    def member(self, xi: Sequence[float]) -> FourierTaylor:
        return linear_series(self.n, xi) + self.base + self._perturbation

    def perturbation(self, xi: Sequence[float]) -> FourierTaylor:
        return self._perturbation


def expand_family(
    H0: IntegrableHamiltonian,
    H1: FourierTaylor,
    omega_grid: Sequence[Sequence[float]],
    R: float,
) -> ParamFamily:
    """Expande H⁰ + H¹ en cada frecuencia de la grilla."""
    if H1.n != H0.n:
        raise ValueError(f"H¹ tiene n={H1.n}, H⁰ tiene n={H0.n}")
    members = []
    prev = None
    for omega in omega_grid:
        member = expand_member(H0, H1, omega, R=R, z_init=prev)
        members.append(member)
        prev = member.z0
    norm_bound = H0.gevrey.A0 * R**2 + max(
        (strip_sup_bound(m.perturbation, 0.0, R).value for m in members), default=0.0
    )
    logger.info(f"Familia expandida en {len(members)} frecuencias (R={R:g}, ‖P‖ ≤ {norm_bound:.3e})")
    return ParamFamily(H0, H1, members, R, norm_bound)


def perturbation_from_modes(
    n: int,
    modes: Sequence[tuple[Sequence[int], float]],
    kind: str = "cos",
) -> FourierTaylor:
    """Σ a_k cos⟨k, θ⟩ (o sin) desde la lista "(k, amplitud)"."""
    out = FourierTaylor.zeros(n)
    make = FourierTaylor.cosine if kind == "cos" else FourierTaylor.sine
    for k, amp in modes:
        if len(k) != n:
            raise ValueError(f"modo {k} no tiene dimensión {n}")
        if any(k):
            out = out + make(tuple(k), amp)
        else:
            out = out + FourierTaylor.constant(n, amp if kind == "cos" else 0.0)
    return out


# ------------------------------------------------------------------
# Estimación Gevrey
# ------------------------------------------------------------------

@dataclass(frozen=True)
class GevreyEstimate:
    """max |∂^α∂^β f| L₁^{−|α|} L₂^{−|β|} (α!β!)^{−ρ}: cota INFERIOR del sup real."""

    value: float
    argmax: tuple
    max_order: int
    lower_bound: bool = True


def _multi_indices(n: int, max_order: int) -> list[tuple[int, ...]]:
    out = []

    def rec(prefix: list[int], left: int):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for a in range(left + 1):
            rec(prefix + [a], left - a)

    rec([], max_order)
    return out


def gevrey_norm_estimate(
    f: FourierTaylor | Callable[[tuple, tuple], np.ndarray],
    L1: float,
    L2: float = 1.0,
    rho: float = 1.0,
    max_order: int = 6,
    dims: tuple[int, int] | None = None,
    points: int = 64,
) -> GevreyEstimate:
    """Estimación de la norma Gevrey sobre derivadas muestreadas.

    f FourierTaylor: α recorre ∂θ (exacto), evaluado en una grilla real con I = 0.
    f callable: f(α, β) → valores de ∂_x^α∂_ω^β en los puntos de muestreo; dims = (n_x, n_ω).
    """
    best, arg = 0.0, ((), ())
    if isinstance(f, FourierTaylor):
        n = f.n
        axes = [np.linspace(0, 2 * np.pi, max(4, int(round(points ** (1 / n)))), endpoint=False)] * n
        grid = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)
        for alpha in _multi_indices(n, max_order):
            g = f
            for i, a in enumerate(alpha):
                for _ in range(a):
                    g = g.derivative_theta(i)
            sup = float(np.abs(g.evaluate(grid)).max())
            scale = L1 ** sum(alpha) * math.prod(math.factorial(a) for a in alpha) ** rho
            if sup / scale > best:
                best, arg = sup / scale, (alpha, ())
        return GevreyEstimate(best, arg, max_order)
    if dims is None:
        raise ValueError("dims=(n_x, n_ω) es obligatorio para un evaluador")
    nx, nw = dims
    for alpha in _multi_indices(nx, max_order):
        for beta in _multi_indices(nw, max_order - sum(alpha)):
            sup = float(np.abs(np.asarray(f(alpha, beta))).max())
            fact = math.prod(math.factorial(a) for a in alpha) * math.prod(math.factorial(b) for b in beta)
            scale = L1 ** sum(alpha) * L2 ** sum(beta) * fact**rho
            if sup / scale > best:
                best, arg = sup / scale, (alpha, beta)
    return GevreyEstimate(best, arg, max_order)
