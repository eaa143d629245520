"""
torus_forge/kam/iterate.py — Iteración KAM por frecuencia y verificación del toro

Para cada ω de la grilla se arranca con ξ = ω y H = H_ξ, y se encadenan
pasos hasta que el residuo de forma normal cae bajo `tol` o se llega a j_max.
La transformación total es Ψ = Φ₀∘Φ₁∘…; el toro es Ψ(θ, 0) en coordenadas
centradas en z₀(ξ_final).

En modo gevrey el nivel j usa el aproximante analítico P_j de la
perturbación (banda u_j = 4 s_j); el cambio P_{j+1} − P_j entra por la pila.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from torus_forge.approx.green import project_series
from torus_forge.errors import DivergenceDetected
from torus_forge.kam.jets import JET_TOL, jet_derivatives
from torus_forge.kam.schedule import ANALYTIC, GEVREY, KamSchedule
from torus_forge.kam.step import (
    StepParams,
    StepReport,
    TorusTransform,
    apply_stack,
    kam_step,
    normal_form_residual,
    symplectic_defect,
)
from torus_forge.model.family import FamilyMember, HamiltonianFamily, ParamFamily
from torus_forge.series.fourier import FourierTaylor

logger = logging.getLogger(__name__)

TINY = 1e-300


@dataclass(frozen=True)
class IterateSettings:
    kappa: float
    tau: float
    mode: str = GEVREY
    L1: float = 1.0
    rho: float = 2.0
    K_cap: int = 12
    j_max: int = 12
    tol: float = 1e-11
    h: float = 0.1
    strict: bool = False

    def __post_init__(self):
        if self.mode not in (GEVREY, ANALYTIC):
            raise ValueError(f"modo desconocido: {self.mode}")
        if self.K_cap < 1 or self.j_max < 1:
            raise ValueError("K_cap y j_max deben ser ≥ 1")


class ProjectedFamily(HamiltonianFamily):
    """La familia base con su perturbación reemplazada por el aproximante de banda u."""

    def __init__(self, base: HamiltonianFamily, u: float, L1: float, rho: float):
        self.base = base
        self.n = base.n
        self.u = u
        self.L1 = L1
        self.rho = rho

    def perturbation(self, xi: Sequence[float]) -> FourierTaylor:
        return project_series(self.base.perturbation(xi), self.u, self.L1, self.rho)

    def member(self, xi: Sequence[float]) -> FourierTaylor:
        return self.base.member(xi) - self.base.perturbation(xi) + self.perturbation(xi)

    def frequency_model(self, xi: Sequence[float]) -> np.ndarray:
        return self.base.frequency_model(xi)


# ------------------------------------------------------------------
# Composición de la pila
# ------------------------------------------------------------------

def compose(stack: Sequence[TorusTransform], points: np.ndarray) -> np.ndarray:
    """Ψ(x) = Φ₀(Φ₁(…Φ_j(x)))."""
    x = np.atleast_2d(np.asarray(points, dtype=complex))
    for T in reversed(stack):
        x = T(x)
    return x


def compose_tangent(stack: Sequence[TorusTransform], points: np.ndarray,
                    vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(Ψ(x), DΨ(x)·v) por regla de la cadena."""
    x = np.atleast_2d(np.asarray(points, dtype=complex))
    v = np.atleast_2d(np.asarray(vectors, dtype=complex))
    for T in reversed(stack):
        v = np.einsum("pij,pj->pi", T.jacobian(x), v)
        x = T(x)
    return x, v


def compose_jacobian(stack: Sequence[TorusTransform], points: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(points, dtype=complex))
    dim = x.shape[1]
    M = np.broadcast_to(np.eye(dim, dtype=complex), (x.shape[0], dim, dim)).copy()
    for T in reversed(stack):
        M = np.einsum("pij,pjk->pik", T.jacobian(x), M)
        x = T(x)
    return M


def theta_grid(n: int, size: int) -> np.ndarray:
    axes = [np.linspace(0, 2 * np.pi, size, endpoint=False)] * n
    return np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)


def hamiltonian_field(H: FourierTaylor) -> tuple[list[FourierTaylor], list[FourierTaylor]]:
    """Series de ∂_I H y −∂_θ H."""
    n = H.n
    return [H.derivative_action(i) for i in range(n)], [-H.derivative_theta(i) for i in range(n)]


def conjugacy_residual(H: FourierTaylor, stack: Sequence[TorusTransform], omega: Sequence[float],
                       size: int = 64) -> float:
    """sup_θ |X_H∘Ψ(θ, 0) − DΨ(θ, 0)·(ω, 0)| en una grilla size^n."""
    omega = np.asarray(omega)
    n = H.n
    theta = theta_grid(n, size)
    pts = np.concatenate([theta, np.zeros_like(theta)], axis=1)
    vec = np.concatenate([np.broadcast_to(omega, theta.shape), np.zeros_like(theta)], axis=1)
    image, tangent = compose_tangent(stack, pts, vec)
    dI, mdtheta = hamiltonian_field(H)
    th, ac = image[:, :n], image[:, n:]
    field_vals = np.stack([s.evaluate(th, ac) for s in dI] + [s.evaluate(th, ac) for s in mdtheta], axis=1)
    return float(np.abs(field_vals - tangent).max())


def invariance_defect(H: FourierTaylor, stack: Sequence[TorusTransform], omega: Sequence[float],
                      points: int = 20, T: float = 10.0, seed: int = 0) -> float:
    """Integra X_H (DOP853) desde puntos de Ψ(T^n×{0}) y compara con Ψ(θ + ωt, 0)."""
    omega = np.asarray(omega, dtype=float)
    n = H.n
    rng = np.random.default_rng(seed)
    theta0 = rng.uniform(0, 2 * np.pi, size=(points, n))
    dI, mdtheta = hamiltonian_field(H)

    def rhs(_t, y):
        th, ac = y[None, :n], y[None, n:]
        return np.concatenate([[s.evaluate(th, ac)[0].real for s in dI],
                               [s.evaluate(th, ac)[0].real for s in mdtheta]])

    worst = 0.0
    for th in theta0:
        start = compose(stack, np.concatenate([th, np.zeros(n)])[None, :])[0].real
        sol = solve_ivp(rhs, (0.0, T), start, method="DOP853", rtol=1e-12, atol=1e-13)
        expected = compose(stack, np.concatenate([th + omega * T, np.zeros(n)])[None, :])[0].real
        diff = sol.y[:, -1] - expected
        diff[:n] = np.angle(np.exp(1j * diff[:n]))
        worst = max(worst, float(np.abs(diff).max()))
    return worst


# ------------------------------------------------------------------
# Resultado por frecuencia
# ------------------------------------------------------------------

@dataclass
class TorusRun:
    omega: np.ndarray
    xi: np.ndarray
    stack: list[TorusTransform] = field(repr=False)
    H: FourierTaylor = field(repr=False)
    member: FourierTaylor = field(repr=False)
    residuals: list[float] = field(default_factory=list)
    reports: list[StepReport] = field(default_factory=list)
    z0: np.ndarray | None = None
    template_log_ratios: list[float] = field(default_factory=list)
    conjugacy: float = math.nan
    invariance: float = math.nan
    symplectic: float = math.nan
    expansion: FamilyMember | None = field(default=None, repr=False)
    truncation: float = math.nan

    @property
    def n(self) -> int:
        return len(self.omega)

    @property
    def levels(self) -> int:
        return len(self.stack)

    def embedding(self, theta: np.ndarray) -> np.ndarray:
        """Ψ(θ, 0) en coordenadas centradas (P, 2n)."""
        theta = np.atleast_2d(np.asarray(theta, dtype=complex))
        return compose(self.stack, np.concatenate([theta, np.zeros_like(theta)], axis=1))

    def jet_values(self, theta: np.ndarray) -> np.ndarray:
        """Vector [U − θ, V, φ − ω] aplanado: lo que se deriva en ω."""
        theta = np.atleast_2d(np.asarray(theta, dtype=complex))
        image = self.embedding(theta)
        n = self.n
        return np.concatenate([(image[:, :n] - theta).ravel(), image[:, n:].ravel(), self.xi - self.omega])

    def absolute_embedding(self, theta: np.ndarray) -> np.ndarray:
        image = self.embedding(theta).real
        if self.z0 is not None:
            image[:, self.n:] += self.z0.real
        return image

    def level_exponents(self, floor: float = 1e-14) -> list[float]:
        """log r_{j+1} / log r_j por nivel, sobre los residuos en (floor, 1)."""
        r = [x for x in self.residuals if floor < x < 1]
        return [math.log(b) / math.log(a) for a, b in zip(r, r[1:])]

    def contraction_exponent(self, floor: float = 1e-14) -> float:
        """Exponente p de r_{j+1} ≈ r_j^p: mínimos cuadrados en log por el origen."""
        r = [x for x in self.residuals if floor < x < 1]
        if len(r) < 2:
            return math.nan
        x, y = np.log(r[:-1]), np.log(r[1:])
        return float(x @ y / (x @ x))


def step_params(schedule: KamSchedule, j: int, settings: IterateSettings) -> StepParams:
    """Parámetros del paso j tomados del esquema, con K acotado por K_cap."""
    j = min(j, schedule.levels - 1)
    K = max(1, min(int(schedule.K[j]), settings.K_cap))
    return StepParams(
        sigma=float(schedule.sigma_j[j]),
        eta=min(1.0, max(float(schedule.eta[j]), TINY)),
        K=K,
        r=max(float(schedule.r[j]), TINY),
        s=float(schedule.s[j]),
        h=settings.h,
        kappa=settings.kappa,
        tau=settings.tau,
        strict=settings.strict,
    )


def _level_family(family: HamiltonianFamily, schedule: KamSchedule, j: int,
                  settings: IterateSettings) -> HamiltonianFamily:
    if settings.mode == ANALYTIC:
        return family
    j = min(j, schedule.levels - 1)
    return ProjectedFamily(family, 4 * float(schedule.s[j]), settings.L1, settings.rho)


def iterate_frequency(
    family: HamiltonianFamily,
    schedule: KamSchedule,
    omega: Sequence[complex],
    settings: IterateSettings,
) -> TorusRun:
    """Máquina de estados secuencial para una frecuencia (real o compleja)."""
    omega = np.asarray(omega)
    omega = omega.astype(complex) if np.iscomplexobj(omega) else omega.astype(float)
    xi = omega.copy()
    level_family = _level_family(family, schedule, 0, settings)
    H = level_family.member(xi)
    stack: list[TorusTransform] = []
    reports: list[StepReport] = []
    residuals = [normal_form_residual(H, omega)]
    increases = 0

    for j in range(settings.j_max):
        if residuals[-1] <= settings.tol:
            break
        if j > 0 and settings.mode == GEVREY:
            nxt = _level_family(family, schedule, j, settings)
            H = H + apply_stack(nxt.member(xi) - level_family.member(xi), stack)
            level_family = nxt
        params = step_params(schedule, j, settings)
        result = kam_step(H, omega, params, family=level_family, xi=xi, stack=stack)
        stack.append(result.transform)
        reports.append(result.report)
        H, xi = result.H, result.xi
        residuals.append(normal_form_residual(H, omega))
        increases = increases + 1 if residuals[-1] > residuals[-2] else 0
        if increases >= 2:
            raise DivergenceDetected(j, residuals)

    log_eps = schedule.log_eps
    ratios = [
        math.log(r) - float(log_eps[min(j, schedule.levels - 1)]) if r > 0 else -math.inf
        for j, r in enumerate(residuals)
    ]
    expansion = family.expansion(xi) if isinstance(family, ParamFamily) else None
    return TorusRun(
        omega=omega,
        xi=xi,
        stack=stack,
        H=H,
        member=family.member(xi),
        residuals=residuals,
        reports=reports,
        z0=expansion.z0 if expansion is not None else None,
        template_log_ratios=ratios,
        expansion=expansion,
    )


def verify_run(run: TorusRun, grid: int = 64, invariance_points: int = 20, T: float = 10.0,
               samples: int = 100, seed: int = 0) -> TorusRun:
    """Llena conjugacy, invariance, symplectic y truncation de una corrida real."""
    if np.iscomplexobj(run.omega):
        raise ValueError("la verificación necesita ω real")
    n = run.n
    run.conjugacy = conjugacy_residual(run.member, run.stack, run.omega, size=grid)
    if invariance_points > 0:
        run.invariance = invariance_defect(run.member, run.stack, run.omega,
                                           points=invariance_points, T=T, seed=seed)
    rng = np.random.default_rng(seed)
    pts = np.concatenate([rng.uniform(0, 2 * np.pi, (samples, n)),
                          rng.uniform(-1e-3, 1e-3, (samples, n))], axis=1)
    run.symplectic = symplectic_defect(compose_jacobian(run.stack, pts)) if run.stack else 0.0
    # La familia congelada es exacta en I; con H⁰ se mide el resto cúbico y superior
    if run.expansion is not None:
        actions = run.embedding(theta_grid(n, 16)).real[:, n:]
        run.truncation = run.expansion.truncation_error(actions)
    else:
        run.truncation = 0.0
    logger.info(
        f"ω={tuple(np.round(run.omega, 6))}: conjugación {run.conjugacy:.2e}, "
        f"invariancia {run.invariance:.2e}, simplecticidad {run.symplectic:.2e}, truncación {run.truncation:.2e}"
    )
    return run


# ------------------------------------------------------------------
# Jet sobre la grilla
# ------------------------------------------------------------------

@dataclass
class TorusJet:
    """Corridas por ω de la grilla, valores de Φ(θ, 0; ω) y tablas de derivadas en ω."""

    runs: list[TorusRun]
    grid_size: int
    derivatives: list[dict[tuple[int, ...], np.ndarray]] = field(default_factory=list)
    consistency: list[float] = field(default_factory=list)

    @property
    def omegas(self) -> list[tuple[float, ...]]:
        return [tuple(float(w) for w in r.omega) for r in self.runs]

    @property
    def n(self) -> int:
        return self.runs[0].n if self.runs else 0

    def theta(self) -> np.ndarray:
        return theta_grid(self.n, self.grid_size)

    def values(self, index: int) -> np.ndarray:
        return self.runs[index].jet_values(self.theta()).real

    def history(self) -> list[list[float]]:
        return [r.residuals for r in self.runs]


def differentiate(
    jet: TorusJet,
    family: HamiltonianFamily,
    schedule: KamSchedule,
    settings: IterateSettings,
    order: int = 1,
    nodes: int = 8,
    tolerance: float = JET_TOL,
) -> TorusJet:
    """Llena jet.derivatives re-iterando en ω complejo sobre contornos de Cauchy.

    El orden cero se toma de la corrida real, no de la cuadratura.
    """
    theta = jet.theta()
    tables, consistency = [], []
    for index, run in enumerate(jet.runs):
        def f(w: np.ndarray) -> np.ndarray:
            return iterate_frequency(family, schedule, w, settings).jet_values(theta)

        table = jet_derivatives(f, run.omega, order, settings.h, nodes=nodes, tolerance=tolerance)
        values = {beta: np.real(val) for beta, val in table.values.items()}
        values[(0,) * run.n] = jet.values(index)
        tables.append(values)
        consistency.append(table.consistency)
        logger.debug(f"ω={tuple(np.round(run.omega, 6))}: jet de orden {order}, "
                     f"discrepancia {table.consistency:.2e}")
    jet.derivatives = tables
    jet.consistency = consistency
    return jet


def iterate(
    family: HamiltonianFamily,
    schedule: KamSchedule,
    omegas: Sequence[Sequence[float]],
    settings: IterateSettings,
    grid_size: int = 16,
    order: int = 1,
    nodes: int = 8,
    seed: int = 0,
    tolerance: float = JET_TOL,
) -> TorusJet:
    """Itera, verifica y deriva en ω cada frecuencia de la grilla, en orden."""
    runs = [
        verify_run(iterate_frequency(family, schedule, omega, settings), invariance_points=0, seed=seed)
        for omega in omegas
    ]
    jet = TorusJet(runs, grid_size)
    if order > 0:
        differentiate(jet, family, schedule, settings, order=order, nodes=nodes, tolerance=tolerance)
    return jet
