"""
torus_forge/series/fourier.py — Series de Fourier–Taylor truncadas en T^n × {|I| < r}

Una FourierTaylor guarda coeficientes c[k, m] densos para |k_i| ≤ K (y
|k|₁ ≤ K) y monomios m en la acción I de grado ≤ 2, ordenados por grado y
luego lexicográficamente: para n=2 → 1, I₁, I₂, I₁², I₁I₂, I₂².

La dependencia en ω la maneja el llamador (una serie por frecuencia).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Iterable, Sequence

import numpy as np
from scipy import signal

from torus_forge.config import config
from torus_forge.errors import DimensionMismatch, ResonantMode

logger = logging.getLogger(__name__)

FLUSH = 1e-300
MAX_DEGREE = 2


# ------------------------------------------------------------------
# Tablas de monomios y modos
# ------------------------------------------------------------------

@lru_cache(maxsize=None)
def monomials(n: int) -> tuple[tuple[int, ...], ...]:
    """Exponentes de los monomios en I de grado ≤ 2."""
    out = [tuple([0] * n)]
    for i in range(n):
        e = [0] * n
        e[i] = 1
        out.append(tuple(e))
    for i in range(n):
        for j in range(i, n):
            e = [0] * n
            e[i] += 1
            e[j] += 1
            out.append(tuple(e))
    return tuple(out)


@lru_cache(maxsize=None)
def monomial_index(n: int) -> dict[tuple[int, ...], int]:
    return {m: i for i, m in enumerate(monomials(n))}


@lru_cache(maxsize=None)
def _degrees(n: int) -> np.ndarray:
    return np.array([sum(m) for m in monomials(n)])


@lru_cache(maxsize=None)
def _product_table(n: int) -> tuple[tuple[int, int, int], ...]:
    """Pares (ia, ib) de monomios cuyo producto queda en grado ≤ 2, con su índice."""
    mons = monomials(n)
    index = monomial_index(n)
    table = []
    for ia, ma in enumerate(mons):
        for ib, mb in enumerate(mons):
            mc = tuple(x + y for x, y in zip(ma, mb))
            if sum(mc) <= MAX_DEGREE:
                table.append((ia, ib, index[mc]))
    return tuple(table)


@lru_cache(maxsize=64)
def mode_grid(n: int, K: int) -> np.ndarray:
    """Vectores k en la caja |k_i| ≤ K, forma (2K+1,)*n + (n,)."""
    axes = np.meshgrid(*([np.arange(-K, K + 1)] * n), indexing="ij")
    grid = np.stack(axes, axis=-1)
    grid.setflags(write=False)
    return grid


@lru_cache(maxsize=64)
def _l1_mask(n: int, K: int) -> np.ndarray:
    mask = np.abs(mode_grid(n, K)).sum(axis=-1) <= K
    mask.setflags(write=False)
    return mask


def _divisors(n: int, K: int, omega: np.ndarray) -> np.ndarray:
    """⟨k, ω⟩ sobre la caja, sumando coordenada por coordenada."""
    grid = mode_grid(n, K)
    out = grid[..., 0] * omega[0]
    for i in range(1, n):
        out = out + grid[..., i] * omega[i]
    return out


# ------------------------------------------------------------------
# Tipos
# ------------------------------------------------------------------

@dataclass(frozen=True)
class StripNorm:
    """Cota de sup sobre D_{s,r} = {|Im θ| < s} × {|I| < r}."""

    s: float
    r: float
    value: float


class FourierTaylor:
    """Serie de Fourier en θ con coeficientes polinomiales en I (grado ≤ 2). Inmutable."""

    __slots__ = ("n", "K", "coeffs")

    def __init__(self, coeffs: np.ndarray):
        arr = np.array(coeffs, dtype=complex)
        if arr.ndim < 2:
            raise ValueError("se espera un arreglo (2K+1,)*n + (M,)")
        n = arr.ndim - 1
        side = arr.shape[0]
        if side % 2 != 1 or any(s != side for s in arr.shape[:-1]):
            raise ValueError(f"forma inválida {arr.shape}")
        if arr.shape[-1] != len(monomials(n)):
            raise ValueError(f"se esperaban {len(monomials(n))} monomios, hay {arr.shape[-1]}")
        self._init(arr, n, (side - 1) // 2)

    def _init(self, arr: np.ndarray, n: int, K: int) -> None:
        arr[np.abs(arr) < FLUSH] = 0.0
        arr[~_l1_mask(n, K)] = 0.0
        arr.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "coeffs", arr)

    def __setattr__(self, name, value):
        raise AttributeError("FourierTaylor es inmutable")

    @classmethod
    def _wrap(cls, arr: np.ndarray, n: int, K: int) -> "FourierTaylor":
        obj = cls.__new__(cls)
        obj._init(arr, n, K)
        return obj

    # ------------------------------------------------------------------
    # Constructores
    # ------------------------------------------------------------------

    @classmethod
    def zeros(cls, n: int, K: int = 0) -> "FourierTaylor":
        return cls._wrap(np.zeros((2 * K + 1,) * n + (len(monomials(n)),), dtype=complex), n, K)

    @classmethod
    def from_terms(
        cls,
        n: int,
        terms: Iterable[tuple[Sequence[int], Sequence[int], complex]],
        K: int | None = None,
    ) -> "FourierTaylor":
        """Construye desde (k, monomio, coeficiente); los términos repetidos se suman."""
        terms = [(tuple(k), tuple(m), complex(c)) for k, m, c in terms]
        if K is None:
            K = max((sum(abs(x) for x in k) for k, _, _ in terms), default=0)
        arr = np.zeros((2 * K + 1,) * n + (len(monomials(n)),), dtype=complex)
        index = monomial_index(n)
        for k, m, c in terms:
            if len(k) != n or len(m) != n:
                raise DimensionMismatch(n, len(k))
            if sum(abs(x) for x in k) > K:
                continue
            arr[tuple(x + K for x in k) + (index[m],)] += c
        return cls._wrap(arr, n, K)

    @classmethod
    def constant(cls, n: int, value: complex) -> "FourierTaylor":
        return cls.from_terms(n, [((0,) * n, (0,) * n, value)], K=0)

    @classmethod
    def action(cls, n: int, i: int) -> "FourierTaylor":
        """La coordenada I_i."""
        m = [0] * n
        m[i] = 1
        return cls.from_terms(n, [((0,) * n, m, 1.0)], K=0)

    @classmethod
    def cosine(cls, k: Sequence[int], amplitude: float = 1.0,
               monomial: Sequence[int] | None = None) -> "FourierTaylor":
        """amplitude · I^m · cos⟨k, θ⟩."""
        n = len(k)
        m = tuple(monomial) if monomial is not None else (0,) * n
        neg = tuple(-x for x in k)
        return cls.from_terms(n, [(k, m, amplitude / 2), (neg, m, amplitude / 2)])

    @classmethod
    def sine(cls, k: Sequence[int], amplitude: float = 1.0,
             monomial: Sequence[int] | None = None) -> "FourierTaylor":
        """amplitude · I^m · sin⟨k, θ⟩."""
        n = len(k)
        m = tuple(monomial) if monomial is not None else (0,) * n
        neg = tuple(-x for x in k)
        return cls.from_terms(n, [(k, m, -0.5j * amplitude), (neg, m, 0.5j * amplitude)])

    @classmethod
    def from_grid(cls, values: np.ndarray, K: int) -> "FourierTaylor":
        """Coeficientes (sin I) de muestras en la grilla uniforme θ_j = 2πj/N."""
        values = np.asarray(values)
        n = values.ndim
        N = values.shape[0]
        if N <= 2 * K:
            raise ValueError(f"grilla de {N} puntos insuficiente para K={K}")
        spectrum = np.fft.fftn(values) / N**n
        grid = mode_grid(n, K)
        idx = tuple(np.mod(grid[..., i], N) for i in range(n))
        arr = np.zeros((2 * K + 1,) * n + (len(monomials(n)),), dtype=complex)
        arr[..., 0] = spectrum[idx]
        return cls._wrap(arr, n, K)

    # ------------------------------------------------------------------
    # Forma
    # ------------------------------------------------------------------

    @property
    def degree(self) -> int:
        """Grado efectivo en I (0 para la serie nula)."""
        nz = np.any(self.coeffs != 0, axis=tuple(range(self.n)))
        degs = _degrees(self.n)[nz]
        return int(degs.max()) if degs.size else 0

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def support_radius(self) -> int:
        """max |k_i| entre los coeficientes no nulos."""
        nz = np.argwhere(np.any(self.coeffs != 0, axis=-1))
        return int(np.abs(nz - self.K).max()) if nz.size else 0

    def _central(self, radius: int) -> np.ndarray:
        sl = (slice(self.K - radius, self.K + radius + 1),) * self.n
        return self.coeffs[sl]

    def resize(self, K: int) -> "FourierTaylor":
        """Lleva al corte K: rellena con ceros o trunca a |k|₁ ≤ K."""
        if K == self.K:
            return self
        arr = np.zeros((2 * K + 1,) * self.n + (self.coeffs.shape[-1],), dtype=complex)
        r = min(K, self.K)
        dst = (slice(K - r, K + r + 1),) * self.n
        arr[dst] = self._central(r)
        return FourierTaylor._wrap(arr, self.n, K)

    def truncate(self, K: int) -> "FourierTaylor":
        """T_K: descarta los modos con |k|₁ > K."""
        return self.resize(K) if K < self.K else self

    def chop(self, tol: float) -> "FourierTaylor":
        arr = self.coeffs.copy()
        arr[np.abs(arr) < tol] = 0.0
        return FourierTaylor._wrap(arr, self.n, self.K)

    def _check(self, other: "FourierTaylor") -> None:
        if self.n != other.n:
            raise DimensionMismatch(self.n, other.n)

    # ------------------------------------------------------------------
    # Aritmética lineal
    # ------------------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, FourierTaylor):
            self._check(other)
            K = max(self.K, other.K)
            arr = self.resize(K).coeffs + other.resize(K).coeffs
            return FourierTaylor._wrap(arr, self.n, K)
        return self + FourierTaylor.constant(self.n, other)

    __radd__ = __add__

    def __neg__(self):
        return FourierTaylor._wrap(-self.coeffs, self.n, self.K)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, FourierTaylor):
            return multiply(self, other)
        return FourierTaylor._wrap(self.coeffs * other, self.n, self.K)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return FourierTaylor._wrap(self.coeffs / scalar, self.n, self.K)

    def scale(self, factor: complex) -> "FourierTaylor":
        return self * factor

    def conj(self) -> "FourierTaylor":
        """Conjugado de la función (para θ, I reales)."""
        arr = np.conj(np.flip(self.coeffs, axis=tuple(range(self.n))))
        return FourierTaylor._wrap(arr, self.n, self.K)

    def is_real(self, tol: float = 0.0) -> bool:
        """c[−k, m] = conj(c[k, m]) salvo tol (absoluta, relativa a max|c|)."""
        diff = np.abs(self.coeffs - self.conj().coeffs).max(initial=0.0)
        return diff <= tol * max(1.0, self.max_abs())

    # ------------------------------------------------------------------
    # Derivadas y partes
    # ------------------------------------------------------------------

    def derivative_theta(self, i: int) -> "FourierTaylor":
        k = mode_grid(self.n, self.K)[..., i]
        return FourierTaylor._wrap(self.coeffs * (1j * k)[..., None], self.n, self.K)

    def derivative_action(self, i: int) -> "FourierTaylor":
        mons = monomials(self.n)
        index = monomial_index(self.n)
        arr = np.zeros_like(self.coeffs)
        for j, m in enumerate(mons):
            if m[i] == 0:
                continue
            lower = list(m)
            lower[i] -= 1
            arr[..., index[tuple(lower)]] += m[i] * self.coeffs[..., j]
        return FourierTaylor._wrap(arr, self.n, self.K)

    def part(self, degree: int) -> "FourierTaylor":
        """Parte homogénea de grado `degree` en I."""
        arr = self.coeffs * (_degrees(self.n) == degree)
        return FourierTaylor._wrap(arr, self.n, self.K)

    def up_to_degree(self, degree: int) -> "FourierTaylor":
        arr = self.coeffs * (_degrees(self.n) <= degree)
        return FourierTaylor._wrap(arr, self.n, self.K)

    def coefficient(self, monomial: Sequence[int]) -> "FourierTaylor":
        """Coeficiente (función de θ) del monomio dado, como serie de grado 0."""
        j = monomial_index(self.n)[tuple(monomial)]
        arr = np.zeros_like(self.coeffs)
        arr[..., 0] = self.coeffs[..., j]
        return FourierTaylor._wrap(arr, self.n, self.K)

    def times_monomial(self, monomial: Sequence[int]) -> "FourierTaylor":
        """Multiplica una serie de grado 0 por I^m."""
        j = monomial_index(self.n)[tuple(monomial)]
        arr = np.zeros_like(self.coeffs)
        arr[..., j] = self.coeffs[..., 0]
        return FourierTaylor._wrap(arr, self.n, self.K)

    def mean_free(self) -> "FourierTaylor":
        """Resta el promedio [·] (modo k=0)."""
        arr = self.coeffs.copy()
        arr[(self.K,) * self.n] = 0.0
        return FourierTaylor._wrap(arr, self.n, self.K)

    def average(self) -> np.ndarray:
        return average(self)

    def average_linear(self) -> np.ndarray:
        """Vector de coeficientes promedio de I_1..I_n."""
        return self.average()[1:self.n + 1]

    def average_hessian(self) -> np.ndarray:
        """Matriz A con [parte cuadrática] = ½⟨A I, I⟩."""
        avg = self.average()
        index = monomial_index(self.n)
        A = np.zeros((self.n, self.n), dtype=avg.dtype)
        for i in range(self.n):
            for j in range(i, self.n):
                m = [0] * self.n
                m[i] += 1
                m[j] += 1
                c = avg[index[tuple(m)]]
                if i == j:
                    A[i, i] = 2 * c
                else:
                    A[i, j] = A[j, i] = c
        return A

    def shift_actions(self, c: Sequence[complex]) -> "FourierTaylor":
        """Sustituye I → I + c (exacto en grado ≤ 2)."""
        c = np.asarray(c)
        mons = monomials(self.n)
        index = monomial_index(self.n)
        arr = np.zeros(self.coeffs.shape, dtype=np.result_type(self.coeffs, c))
        for jm, m in enumerate(mons):
            col = self.coeffs[..., jm]
            if not np.any(col):
                continue
            for jl, low in enumerate(mons):
                if any(a > b for a, b in zip(low, m)):
                    continue
                factor = 1.0
                for i in range(self.n):
                    factor *= comb(m[i], low[i]) * c[i] ** (m[i] - low[i])
                arr[..., jl] += factor * col
        return FourierTaylor._wrap(arr.astype(complex), self.n, self.K)

    # ------------------------------------------------------------------
    # Evaluación y normas
    # ------------------------------------------------------------------

    def evaluate(self, theta: np.ndarray, actions: np.ndarray | None = None,
                 chunk: int = 2048) -> np.ndarray:
        """Evalúa en puntos θ (P, n) y acciones (P, n); acciones None → I = 0."""
        theta = np.atleast_2d(np.asarray(theta))
        P = theta.shape[0]
        rows = np.argwhere(np.any(self.coeffs != 0, axis=-1))
        if not rows.size:
            return np.zeros(P, dtype=complex)
        kvec = rows - self.K
        C = self.coeffs[tuple(rows.T)]
        if actions is None:
            mono = np.zeros((P, C.shape[1]))
            mono[:, 0] = 1.0
        else:
            actions = np.atleast_2d(np.asarray(actions))
            mono = np.stack(
                [np.prod(actions ** np.array(m), axis=1) for m in monomials(self.n)], axis=1
            )
        out = np.empty(P, dtype=complex)
        for start in range(0, P, chunk):
            sl = slice(start, start + chunk)
            E = np.exp(1j * (theta[sl] @ kvec.T))
            out[sl] = np.sum((E @ C) * mono[sl], axis=1)
        return out

    def max_abs(self) -> float:
        return float(np.abs(self.coeffs).max(initial=0.0))

    def l1(self) -> float:
        return float(np.abs(self.coeffs).sum())

    def __repr__(self) -> str:
        return f"FourierTaylor(n={self.n}, K={self.K}, degree={self.degree}, max={self.max_abs():.3e})"


# ------------------------------------------------------------------
# Operaciones
# ------------------------------------------------------------------

def multiply(a: FourierTaylor, b: FourierTaylor) -> FourierTaylor:
    """Producto exacto por convolución directa; descarta lo que pasa de grado 2 en I."""
    if a.n != b.n:
        raise DimensionMismatch(a.n, b.n)
    n = a.n
    K = a.K + b.K
    out = np.zeros((2 * K + 1,) * n + (len(monomials(n)),), dtype=complex)
    if a.is_zero() or b.is_zero():
        return FourierTaylor._wrap(out, n, K)
    ra, rb = a.support_radius(), b.support_radius()
    A, B = a._central(ra), b._central(rb)
    nz_a = np.any(A != 0, axis=tuple(range(n)))
    nz_b = np.any(B != 0, axis=tuple(range(n)))
    r = ra + rb
    dst = (slice(K - r, K + r + 1),) * n
    for ia, ib, ic in _product_table(n):
        if nz_a[ia] and nz_b[ib]:
            out[dst + (ic,)] += signal.convolve(A[..., ia], B[..., ib], method="direct")
    return FourierTaylor._wrap(out, n, K)


def poisson_bracket(a: FourierTaylor, b: FourierTaylor) -> FourierTaylor:
    """{a, b} = Σ ∂θ_i a ∂I_i b − ∂I_i a ∂θ_i b."""
    if a.n != b.n:
        raise DimensionMismatch(a.n, b.n)
    out = FourierTaylor.zeros(a.n, a.K + b.K)
    for i in range(a.n):
        da_i = a.derivative_action(i)
        db_i = b.derivative_action(i)
        if not db_i.is_zero():
            out = out + multiply(a.derivative_theta(i), db_i)
        if not da_i.is_zero():
            out = out - multiply(da_i, b.derivative_theta(i))
    return out


def average(a: FourierTaylor) -> np.ndarray:
    """[a] = c[0, ·]: polinomio en I con los coeficientes del modo cero."""
    return np.array(a.coeffs[(a.K,) * a.n])


def lie_derivative(F: FourierTaylor, omega: Sequence[complex]) -> FourierTaylor:
    """L_ω F = Σ ω_i ∂θ_i F."""
    omega = np.asarray(omega)
    if omega.shape != (F.n,):
        raise DimensionMismatch(F.n, omega.shape[0])
    out = FourierTaylor.zeros(F.n, F.K)
    for i in range(F.n):
        out = out + F.derivative_theta(i) * omega[i]
    return out


def solve_homological(
    g: FourierTaylor,
    omega: Sequence[complex],
    K: int,
    resonance_floor: float | None = None,
) -> FourierTaylor:
    """Resuelve L_ω F = T_K(g − [g]) modo a modo: F_k = g_k / (i⟨k, ω⟩), [F] = 0."""
    omega = np.asarray(omega)
    if omega.shape != (g.n,):
        raise DimensionMismatch(g.n, omega.shape[0])
    floor = config.resonance_floor if resonance_floor is None else resonance_floor
    g = g.resize(K)
    div = _divisors(g.n, K, omega)
    coeffs = g.coeffs.copy()
    coeffs[(K,) * g.n] = 0.0
    active = np.any(coeffs != 0, axis=-1)
    resonant = active & (np.abs(div) < floor)
    if np.any(resonant):
        idx = np.argwhere(resonant)[0]
        k = tuple(int(x) - K for x in idx)
        logger.warning(f"Modo resonante {k} con ω={omega}")
        raise ResonantMode(k, float(abs(div[tuple(idx)])))
    safe = np.where(active, 1j * div, 1.0)
    out = np.where(active[..., None], coeffs / safe[..., None], 0.0)
    return FourierTaylor._wrap(out, g.n, K)


def strip_sup_bound(a: FourierTaylor, s: float, r: float) -> StripNorm:
    """Σ |c[k,m]| e^{|k|s} r^{deg m}: cota rigurosa del sup en D_{s,r}."""
    if s < 0 or r < 0:
        raise ValueError("s y r deben ser ≥ 0")
    order = np.abs(mode_grid(a.n, a.K)).sum(axis=-1)
    weight = np.exp(order * s)[..., None] * (float(r) ** _degrees(a.n))
    return StripNorm(s=s, r=r, value=float(np.sum(np.abs(a.coeffs) * weight)))
