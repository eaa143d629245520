"""
torus_forge/approx/extension.py — Extensiones casi analíticas con truncación Gevrey

F(x + iy) = Σ_{α ≤ N} ∂^α P(x) (iy)^α / α!, con N por eje según
    N = [(2 L u)^{−1/(ρ−1)}] + 1.
En la parte real F coincide con P exactamente (los términos con α ≠ 0 se anulan).
"""
from __future__ import annotations

import itertools
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from torus_forge.errors import OrderUnavailable
from torus_forge.series.fourier import FourierTaylor

logger = logging.getLogger(__name__)

THETA = "theta"
ACTION = "action"
FREQ = "freq"


def truncation_order(L: float, width: float, rho: float) -> int:
    """[(2 L width)^{−1/(ρ−1)}] + 1."""
    if rho <= 1:
        raise ValueError("la truncación Gevrey necesita ρ > 1")
    if width <= 0 or L <= 0:
        raise ValueError("L y el ancho deben ser > 0")
    return int(math.floor((2 * L * width) ** (-1.0 / (rho - 1)))) + 1


@dataclass(frozen=True)
class ExtensionSpec:
    """Anchos (u, v, w) de las bandas en θ, I, ω y órdenes N₁, N₂, N₃."""

    u: float
    L1: float
    rho: float
    v: float | None = None
    w: float | None = None
    L2: float | None = None
    N1: int = field(init=False)
    N2: int = field(init=False)
    N3: int = field(init=False)

    def __post_init__(self):
        L2 = self.L2 if self.L2 is not None else self.L1
        v = self.v if self.v is not None else self.u * self.L1 / L2
        w = self.w if self.w is not None else v
        object.__setattr__(self, "L2", L2)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "N1", truncation_order(self.L1, self.u, self.rho))
        object.__setattr__(self, "N2", truncation_order(L2, v, self.rho))
        object.__setattr__(self, "N3", truncation_order(L2, w, self.rho))

    def chain_ok(self, tol: float = 1e-12) -> bool:
        """v L₂, w L₂ ≤ u L₁ ≤ 1."""
        uL = self.u * self.L1
        return self.v * self.L2 <= uL * (1 + tol) and self.w * self.L2 <= uL * (1 + tol) and uL <= 1 + tol

    def width(self, kind: str) -> float:
        return {THETA: self.u, ACTION: self.v, FREQ: self.w}[kind]

    def order(self, kind: str) -> int:
        return {THETA: self.N1, ACTION: self.N2, FREQ: self.N3}[kind]

    def defect_exponent(self) -> float:
        """(3/4)(ρ−1)(2L₁u)^{−1/(ρ−1)}: exponente de la cota del ∂̄-defecto."""
        return 0.75 * (self.rho - 1) * (2 * self.L1 * self.u) ** (-1.0 / (self.rho - 1))


# ------------------------------------------------------------------
# Funciones reales con derivadas
# ------------------------------------------------------------------

class GevreyFunction(ABC):
    """Función real en R^d con evaluador de derivadas ∂^α."""

    dim: int
    kinds: tuple[str, ...]
    max_order: int | None = None

    @abstractmethod
    def derivative(self, alpha: Sequence[int], x: np.ndarray) -> np.ndarray:
        ...

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.derivative((0,) * self.dim, x)


class TrigFunction(GevreyFunction):
    """Serie de Fourier (sin acciones) en T^n, derivadas exactas en θ."""

    def __init__(self, series: FourierTaylor):
        if series.degree != 0:
            raise ValueError("TrigFunction sólo acepta series de grado 0 en I")
        self.series = series
        self.dim = series.n
        self.kinds = (THETA,) * series.n
        self._cache: dict[tuple[int, ...], FourierTaylor] = {}

    def _derived(self, alpha: tuple[int, ...]) -> FourierTaylor:
        if alpha not in self._cache:
            g = self.series
            for i, a in enumerate(alpha):
                for _ in range(a):
                    g = g.derivative_theta(i)
            self._cache[alpha] = g
        return self._cache[alpha]

    def derivative(self, alpha: Sequence[int], x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        return self._derived(tuple(alpha)).evaluate(x).real

    @classmethod
    def gevrey_model(cls, K: int, amplitude: float = 1.0) -> "TrigFunction":
        """Σ_{1≤k≤K} e^{−√k} cos kθ: función modelo G² en T¹."""
        terms = []
        for k in range(1, K + 1):
            c = amplitude * math.exp(-math.sqrt(k)) / 2
            terms.append(((k,), (0,), c))
            terms.append(((-k,), (0,), c))
        return cls(FourierTaylor.from_terms(1, terms, K=K))


class CallableFunction(GevreyFunction):
    """Envuelve un evaluador derivative(α, x) provisto por el llamador."""

    def __init__(
        self,
        derivative: Callable[[tuple, np.ndarray], np.ndarray],
        kinds: Sequence[str],
        max_order: int | None = None,
    ):
        self._derivative = derivative
        self.kinds = tuple(kinds)
        self.dim = len(self.kinds)
        self.max_order = max_order

    def derivative(self, alpha: Sequence[int], x: np.ndarray) -> np.ndarray:
        if self.max_order is not None and max(alpha) > self.max_order:
            raise OrderUnavailable(max(alpha), self.max_order)
        return np.asarray(self._derivative(tuple(alpha), np.asarray(x, dtype=float)))


# ------------------------------------------------------------------
# Funciones complejas muestreadas
# ------------------------------------------------------------------

@dataclass
class ComplexGridFunction:
    """Evaluador complejo en C^d más sus muestras en una grilla tensorial (x + iy por eje)."""

    dim: int
    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    real_axes: tuple[np.ndarray, ...] = field(repr=False)
    imag_offsets: tuple[np.ndarray, ...] = field(repr=False)
    values: np.ndarray = field(repr=False)
    analytic_axes: frozenset = frozenset()
    dbar: Callable[[np.ndarray, int], np.ndarray] | None = field(default=None, repr=False)
    derivative: Callable[[np.ndarray, int], np.ndarray] | None = field(default=None, repr=False)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self.evaluator(np.asarray(z, dtype=complex).reshape(-1, self.dim))

    @staticmethod
    def grid_points(real_axes: Sequence[np.ndarray], imag_offsets: Sequence[np.ndarray]) -> np.ndarray:
        per_axis = [
            (np.asarray(x, dtype=float)[:, None] + 1j * np.asarray(y, dtype=float)[None, :]).ravel()
            for x, y in zip(real_axes, imag_offsets)
        ]
        return np.array(list(itertools.product(*per_axis)), dtype=complex).reshape(-1, len(per_axis))

    @classmethod
    def sample(
        cls,
        evaluator: Callable[[np.ndarray], np.ndarray],
        real_axes: Sequence[np.ndarray],
        imag_offsets: Sequence[np.ndarray],
        **extra,
    ) -> "ComplexGridFunction":
        real_axes = tuple(np.asarray(x, dtype=float) for x in real_axes)
        imag_offsets = tuple(np.asarray(y, dtype=float) for y in imag_offsets)
        pts = cls.grid_points(real_axes, imag_offsets)
        shape = tuple(len(x) * len(y) for x, y in zip(real_axes, imag_offsets))
        values = np.asarray(evaluator(pts)).reshape(shape)
        return cls(len(real_axes), evaluator, real_axes, imag_offsets, values, **extra)

    def real_slice(self) -> np.ndarray:
        """Muestras con Im = 0 en todos los ejes."""
        out = self.values
        for axis, (x, y) in enumerate(zip(self.real_axes, self.imag_offsets)):
            zero = np.flatnonzero(y == 0.0)
            if not zero.size:
                raise ValueError(f"el eje {axis} no tiene desplazamiento imaginario 0")
            idx = np.arange(len(x)) * len(y) + zero[0]
            out = np.take(out, idx, axis=axis)
        return out


def _imag_monomial(y: np.ndarray, alpha: Sequence[int]) -> np.ndarray:
    """Π_i (i y_i)^{α_i} con potencias enteras."""
    out = np.ones(y.shape[0], dtype=complex)
    for i, a in enumerate(alpha):
        if a:
            out = out * (1j * y[:, i]) ** int(a)
    return out


def _taylor_orders(dim: int, orders: Sequence[int]) -> list[tuple[int, ...]]:
    return list(itertools.product(*[range(N + 1) for N in orders]))


def almost_analytic_extend(
    P: GevreyFunction,
    spec: ExtensionSpec,
    real_axes: Sequence[np.ndarray],
    imag_offsets: Sequence[np.ndarray] | None = None,
) -> ComplexGridFunction:
    """F_j de P sobre las bandas de `spec`; muestras en la grilla dada."""
    orders = [spec.order(kind) for kind in P.kinds]
    if P.max_order is not None and max(orders) + 1 > P.max_order:
        raise OrderUnavailable(max(orders) + 1, P.max_order)
    index = _taylor_orders(P.dim, orders)
    facts = {a: math.prod(math.factorial(x) for x in a) for a in index}

    def evaluator(z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=complex).reshape(-1, P.dim)
        x, y = z.real, z.imag
        out = np.zeros(z.shape[0], dtype=complex)
        for alpha in index:
            mono = _imag_monomial(y, alpha)
            if not np.any(mono):
                continue
            out += P.derivative(alpha, x) * mono / facts[alpha]
        return out

    def dbar(z: np.ndarray, axis: int) -> np.ndarray:
        """2∂̄_k F = Σ_{α_k = N_k} ∂^{α+e_k}P (iy)^α/α!."""
        z = np.asarray(z, dtype=complex).reshape(-1, P.dim)
        x, y = z.real, z.imag
        out = np.zeros(z.shape[0], dtype=complex)
        for alpha in index:
            if alpha[axis] != orders[axis]:
                continue
            up = list(alpha)
            up[axis] += 1
            mono = _imag_monomial(y, alpha)
            out += P.derivative(tuple(up), x) * mono / facts[alpha]
        return out / 2

    if imag_offsets is None:
        imag_offsets = [np.array([0.0, spec.width(k), -spec.width(k)]) for k in P.kinds]
    logger.debug(f"Extensión casi analítica: órdenes {orders}, anchos {[spec.width(k) for k in P.kinds]}")
    return ComplexGridFunction.sample(evaluator, real_axes, imag_offsets, dbar=dbar)


def dbar_defect(F: ComplexGridFunction, axis: int, points: np.ndarray) -> float:
    """max |∂̄_axis F| en los puntos dados (exacto vía la fórmula de truncación)."""
    if F.dbar is None:
        return 0.0
    return float(np.abs(F.dbar(np.asarray(points, dtype=complex).reshape(-1, F.dim), axis)).max())


def cauchy_riemann_residual(F: ComplexGridFunction, axis: int, points: np.ndarray, h: float = 1e-4) -> float:
    """max |½(∂x + i∂y) F| por diferencias centradas de 4º orden."""
    z = np.asarray(points, dtype=complex).reshape(-1, F.dim)
    e = np.zeros(F.dim, dtype=complex)
    e[axis] = 1.0

    def d(direction: complex) -> np.ndarray:
        step = h * direction * e
        return (-F(z + 2 * step) + 8 * F(z + step) - 8 * F(z - step) + F(z - 2 * step)) / (12 * h)

    return float(np.abs(0.5 * (d(1.0) + 1j * d(1j))).max())
