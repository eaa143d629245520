"""
torus_forge/approx/green.py — Proyección de Cauchy–Green y aproximantes analíticos

Por eje: F_{j,m}(z) = (2πi)⁻¹ ∫_Γ F_{j,m−1}(…, η, …) K(η, z_m) dη, con
  - banda periódica: Γ = [−π−2iu, π−2iu] ∪ [π+2iu, −π+2iu], K = ½cot((η−ζ)/2);
  - rectángulo: Γ = ∂D orientado positivamente, K = 1/(η−ζ).
El resultado es analítico en z_m sobre |Im z_m| < 2u y difiere de F por la
integral de área de ∂̄F contra K.

En la banda el integrando es periódico y analítico en x: regla del trapecio.
En el rectángulo: Gauss–Legendre compuesto de 64 nodos por panel.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from torus_forge.approx.extension import (
    ACTION,
    FREQ,
    THETA,
    ComplexGridFunction,
    ExtensionSpec,
    GevreyFunction,
    almost_analytic_extend,
    dbar_defect,
)
from torus_forge.errors import QuadratureFailure
from torus_forge.series.fourier import FourierTaylor, mode_grid

logger = logging.getLogger(__name__)


# ------------------------------------------------------------------
# Núcleo periódico
# ------------------------------------------------------------------

def periodic_kernel(eta: np.ndarray, zeta: np.ndarray = 0.0) -> np.ndarray:
    """K(η, ζ) = ½ cot((η − ζ)/2) = lim Σ_{|k|≤N} 1/(η − ζ + 2πk)."""
    return 0.5 / np.tan((np.asarray(eta) - np.asarray(zeta)) / 2)


def periodic_kernel_derivative(eta: np.ndarray, zeta: np.ndarray) -> np.ndarray:
    """∂_ζ K(η, ζ) = ¼ csc²((η − ζ)/2)."""
    s = np.sin((np.asarray(eta) - np.asarray(zeta)) / 2)
    return 0.25 / (s * s)


def periodic_kernel_series(w: complex, shifts: int = 10_000, levels: int = 3) -> complex:
    """1/w + Σ_{k≤N}(1/(w+2πk) + 1/(w−2πk)), extrapolado N → ∞ (Richardson en 1/N)."""
    w = complex(w)

    def partial(N: int) -> complex:
        k = np.arange(1, N + 1, dtype=float)
        return 1 / w + complex(np.sum(2 * w / (w * w - (2 * np.pi * k) ** 2)))

    hs = [1.0 / (shifts * 2**i) for i in range(levels)]
    table = [partial(shifts * 2**i) for i in range(levels)]
    # Neville en h = 1/N hacia h = 0
    for m in range(1, levels):
        table = [
            (hs[i] * table[i + 1] - hs[i + m] * table[i]) / (hs[i] - hs[i + m])
            for i in range(levels - m)
        ]
    return table[0]


# ------------------------------------------------------------------
# Geometrías
# ------------------------------------------------------------------

@dataclass(frozen=True)
class PeriodicStrip:
    """Banda periódica |Im z| < half_width, período 2π."""

    half_width: float
    nodes: int = 4096

    def contour(self) -> tuple[np.ndarray, np.ndarray]:
        x = 2 * np.pi * np.arange(self.nodes) / self.nodes
        h = 2 * np.pi / self.nodes
        b = self.half_width
        eta = np.concatenate([x - 1j * b, x + 1j * b])
        deta = np.concatenate([np.full(self.nodes, h), np.full(self.nodes, -h)]).astype(complex)
        return eta, deta

    def kernel(self, eta: np.ndarray, zeta: np.ndarray) -> np.ndarray:
        return periodic_kernel(eta, zeta)

    def kernel_derivative(self, eta: np.ndarray, zeta: np.ndarray) -> np.ndarray:
        return periodic_kernel_derivative(eta, zeta)

    def inside(self, zeta: np.ndarray, margin: float = 0.0) -> np.ndarray:
        return np.abs(np.imag(zeta)) < self.half_width * (1 - margin)


@dataclass(frozen=True)
class Rectangle:
    """Rectángulo |Re(z−c)| < half_length, |Im(z−c)| < half_width."""

    half_length: float
    half_width: float
    center: complex = 0.0
    panels: int = 8
    nodes: int = 64

    def contour(self) -> tuple[np.ndarray, np.ndarray]:
        a, b, c = self.half_length, self.half_width, complex(self.center)
        corners = [c - a - 1j * b, c + a - 1j * b, c + a + 1j * b, c - a + 1j * b]
        x, w = np.polynomial.legendre.leggauss(self.nodes)
        etas, detas = [], []
        for start, end in zip(corners, corners[1:] + corners[:1]):
            for p in range(self.panels):
                p0 = start + (end - start) * p / self.panels
                p1 = start + (end - start) * (p + 1) / self.panels
                half = (p1 - p0) / 2
                etas.append((p0 + p1) / 2 + half * x)
                detas.append(half * w)
        return np.concatenate(etas), np.concatenate(detas)

    def kernel(self, eta: np.ndarray, zeta: np.ndarray) -> np.ndarray:
        return 1.0 / (np.asarray(eta) - np.asarray(zeta))

    def kernel_derivative(self, eta: np.ndarray, zeta: np.ndarray) -> np.ndarray:
        d = np.asarray(eta) - np.asarray(zeta)
        return 1.0 / (d * d)

    def inside(self, zeta: np.ndarray, margin: float = 0.0) -> np.ndarray:
        d = np.asarray(zeta) - complex(self.center)
        return (np.abs(d.real) < self.half_length * (1 - margin)) & (
            np.abs(d.imag) < self.half_width * (1 - margin)
        )


Geometry = PeriodicStrip | Rectangle


# ------------------------------------------------------------------
# Proyección
# ------------------------------------------------------------------

@dataclass
class _ContourCache:
    values: dict[bytes, np.ndarray] = field(default_factory=dict)
    limit: int = 256

    def get(self, key: bytes, compute) -> np.ndarray:
        if key not in self.values:
            if len(self.values) >= self.limit:
                self.values.clear()
            self.values[key] = compute()
        return self.values[key]


def green_project(
    F: ComplexGridFunction,
    axis: int,
    geometry: Geometry,
    real_axes: Sequence[np.ndarray] | None = None,
    imag_offsets: Sequence[np.ndarray] | None = None,
) -> ComplexGridFunction:
    """Proyecta F sobre funciones analíticas en la variable `axis`."""
    eta, deta = geometry.contour()
    if not (np.all(np.isfinite(eta)) and eta.size):
        raise QuadratureFailure("contorno vacío o no finito")
    cache = _ContourCache()

    def on_contour(key_point: np.ndarray) -> np.ndarray:
        def compute():
            pts = np.repeat(key_point[None, :], len(eta), axis=0)
            pts[:, axis] = eta
            return np.asarray(F(pts)) * deta
        return cache.get(key_point.tobytes(), compute)

    def integrate(z: np.ndarray, kernel) -> np.ndarray:
        z = np.asarray(z, dtype=complex).reshape(-1, F.dim)
        zeta = z[:, axis]
        if not np.all(geometry.inside(zeta)):
            raise QuadratureFailure(f"puntos fuera del dominio de {type(geometry).__name__}")
        others = np.delete(z, axis, axis=1)
        out = np.empty(z.shape[0], dtype=complex)
        if others.shape[1] == 0:
            groups = [np.arange(z.shape[0])]
        else:
            flat = np.concatenate([others.real, others.imag], axis=1)
            _, inverse = np.unique(flat, axis=0, return_inverse=True)
            inverse = np.asarray(inverse).ravel()
            groups = [np.flatnonzero(inverse == g) for g in range(inverse.max() + 1)]
        for idx in groups:
            key_point = z[idx[0]].copy()
            key_point[axis] = 0.0
            weighted = on_contour(key_point)
            out[idx] = kernel(eta[None, :], zeta[idx, None]) @ weighted / (2j * np.pi)
        if not np.all(np.isfinite(out)):
            raise QuadratureFailure("la cuadratura de contorno produjo valores no finitos")
        return out

    def evaluator(z: np.ndarray) -> np.ndarray:
        return integrate(z, geometry.kernel)

    def derivative(z: np.ndarray, d_axis: int) -> np.ndarray:
        if d_axis != axis:
            return finite_difference(evaluator, z, d_axis, F.dim)
        return integrate(z, geometry.kernel_derivative)

    real_axes = tuple(real_axes) if real_axes is not None else F.real_axes
    if imag_offsets is None:
        imag_offsets = list(F.imag_offsets)
        y = np.asarray(imag_offsets[axis])
        limit = geometry.half_width / 2
        centre = complex(getattr(geometry, "center", 0.0)).imag
        imag_offsets[axis] = y[np.abs(y - centre) <= limit]
    return ComplexGridFunction.sample(
        evaluator,
        real_axes,
        imag_offsets,
        analytic_axes=F.analytic_axes | {axis},
        derivative=derivative,
    )


def finite_difference(evaluator, z: np.ndarray, axis: int, dim: int, h: float = 1e-4) -> np.ndarray:
    """∂_axis por diferencias centradas de 4º orden (dirección real)."""
    z = np.asarray(z, dtype=complex).reshape(-1, dim)
    step = np.zeros(dim, dtype=complex)
    step[axis] = h
    return (-evaluator(z + 2 * step) + 8 * evaluator(z + step)
            - 8 * evaluator(z - step) + evaluator(z - 2 * step)) / (12 * h)


# ------------------------------------------------------------------
# Multiplicadores de Fourier
# ------------------------------------------------------------------

def projection_multiplier(k: np.ndarray, width: float, order: int) -> np.ndarray:
    """λ_k = e^{−t} Σ_{m≤N} t^m/m! = Q(N+1, t), t = 2·width·|k|.

    Es la acción exacta de extender e^{ikx} con N términos y proyectar sobre
    la banda |Im| < 2·width.
    """
    return special.gammaincc(order + 1, 2 * width * np.abs(np.asarray(k, dtype=float)))


def project_series(P: FourierTaylor, u: float, L1: float, rho: float) -> FourierTaylor:
    """P_j en coeficientes: cada modo por Π_i λ_{k_i}(u, N₁)."""
    N1 = ExtensionSpec(u=u, L1=L1, rho=rho).N1
    grid = mode_grid(P.n, P.K)
    weight = np.ones(grid.shape[:-1])
    for i in range(P.n):
        weight = weight * projection_multiplier(grid[..., i], u, N1)
    return FourierTaylor._wrap(P.coeffs * weight[..., None], P.n, P.K)


# ------------------------------------------------------------------
# Sucesión de aproximantes
# ------------------------------------------------------------------

@dataclass(frozen=True)
class ApproxLevel:
    j: int
    u: float
    orders: tuple[int, ...]
    err_sup: float
    err_d1: float
    dbar_defect: float

    def row(self) -> list:
        return [self.j, repr(self.u), repr(self.err_sup), repr(self.err_d1), repr(self.dbar_defect)]


@dataclass
class ApproxResult:
    levels: list[ApproxLevel]
    approximants: list[ComplexGridFunction] = field(repr=False)
    rate_slope: float = math.nan
    rate_r2: float = math.nan

    @staticmethod
    def header() -> list[str]:
        return ["j", "u_j", "err_sup", "err_d1", "dbar_defect"]

    def rows(self) -> list[list]:
        return [lv.row() for lv in self.levels]


def geometry_for(kind: str, spec: ExtensionSpec, half_length: float | None = None,
                 center: complex = 0.0, nodes: int = 4096) -> Geometry:
    """Banda periódica en θ; rectángulos en I y ω con semiancho 2v, 2w."""
    if kind == THETA:
        return PeriodicStrip(half_width=2 * spec.u, nodes=nodes)
    if half_length is None:
        half_length = 2.0
    width = 2 * (spec.v if kind == ACTION else spec.w)
    if kind not in (ACTION, FREQ):
        raise ValueError(f"tipo de eje desconocido: {kind}")
    panels = max(8, int(math.ceil(half_length / width)))
    return Rectangle(half_length=half_length, half_width=width, center=center, panels=panels)


def centered_strips(first_order: int, levels: int, L1: float, rho: float) -> list[float]:
    """Anchos u_j con (2L₁u_j)^{−1/(ρ−1)} = N_j − ½, N_j = first_order + j.

    Cada ancho queda en el centro del intervalo de su orden de truncación.
    """
    if first_order < 1:
        raise ValueError("el primer orden de truncación debe ser ≥ 1")
    return [(N - 0.5) ** (1 - rho) / (2 * L1) for N in range(first_order, first_order + levels)]


def fit_rate(x: Sequence[float], errors: Sequence[float]) -> tuple[float, float]:
    """Regresión de log(err) contra x: (pendiente, R²)."""
    x = np.asarray(x, dtype=float)
    y = np.log(np.asarray(errors, dtype=float))
    if x.size < 2:
        return math.nan, math.nan
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def approx_sequence(
    P: GevreyFunction,
    strips: Sequence[float],
    L1: float,
    rho: float,
    points: np.ndarray | None = None,
    half_lengths: Sequence[float | None] | None = None,
    nodes: int = 4096,
) -> ApproxResult:
    """Aproximantes analíticos P_j (extender + proyectar eje por eje) y sus errores."""
    if points is None:
        if P.dim != 1:
            raise ValueError("points es obligatorio para dim > 1")
        points = np.linspace(0, 2 * np.pi, 96, endpoint=False)[:, None]
    points = np.asarray(points, dtype=float).reshape(-1, P.dim)
    half_lengths = list(half_lengths) if half_lengths is not None else [None] * P.dim
    exact = P(points)
    exact_d1 = [P.derivative(tuple(int(i == a) for i in range(P.dim)), points) for a in range(P.dim)]
    levels, approximants = [], []
    for j, u in enumerate(strips):
        spec = ExtensionSpec(u=u, L1=L1, rho=rho)
        axes = [np.unique(points[:, a]) for a in range(P.dim)]
        F = almost_analytic_extend(P, spec, axes)
        defect = max(
            dbar_defect(F, a, _strip_points(points, a, 2 * spec.width(P.kinds[a])))
            for a in range(P.dim)
        )
        current = F
        for a, kind in enumerate(P.kinds):
            geom = geometry_for(kind, spec, half_lengths[a], nodes=nodes)
            current = green_project(current, a, geom)
        values = current(points.astype(complex))
        err_sup = float(np.abs(values - exact).max())
        err_d1 = 0.0
        for a in range(P.dim):
            d = current.derivative(points.astype(complex), a)
            err_d1 = max(err_d1, float(np.abs(d - exact_d1[a]).max()))
        orders = tuple(spec.order(k) for k in P.kinds)
        logger.info(f"Nivel {j}: u={u:g} N={orders} err_sup={err_sup:.3e} err_d1={err_d1:.3e}")
        levels.append(ApproxLevel(j, float(u), orders, err_sup, err_d1, defect))
        approximants.append(current)
    result = ApproxResult(levels, approximants)
    if len(levels) >= 2 and all(lv.err_sup > 0 for lv in levels):
        x = [lv.u ** (-1.0 / (rho - 1)) for lv in levels]
        result.rate_slope, result.rate_r2 = fit_rate(x, [lv.err_sup for lv in levels])
    return result


def _strip_points(points: np.ndarray, axis: int, width: float) -> np.ndarray:
    """Los puntos de prueba desplazados a Im = ±width en el eje dado."""
    z = points.astype(complex)
    up, down = z.copy(), z.copy()
    up[:, axis] += 1j * width
    down[:, axis] -= 1j * width
    return np.concatenate([up, down])
