"""
torus_forge/kam/step.py — Un paso KAM afín en I

Dado H = N + P con N = e + ⟨ω, I⟩ + ½⟨A I, I⟩, busca F = F₀(θ) + Σ F₁ⱼ(θ) Iⱼ con
    L_ω F₀ = T_K(g₀ − [g₀]),
    L_ω F₁ⱼ = T_K(g₁ⱼ − (A ∇θF₀)ⱼ − [·]),
y toma H₊ = H∘Φ_F = Σ ad_F^m H / m!, ad_F G = {G, F}. Con F afín en I el
grado ≤ 2 se conserva exactamente. Antes de resolver, el parámetro ξ de la
familia se corrige para que la frecuencia promedio vuelva a ser ω.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from torus_forge.certs.inversion import invert_near_identity
from torus_forge.errors import ConditionViolated, SeriesNotConverged
from torus_forge.model.family import HamiltonianFamily, linear_series, quadratic_series
from torus_forge.series.fourier import FourierTaylor, poisson_bracket, solve_homological, strip_sup_bound

logger = logging.getLogger(__name__)

PRUNE = 1e-20
MAX_TERMS = 40


@dataclass(frozen=True)
class StepParams:
    """Parámetros prácticos de un paso: (σ, η, K) más el dominio (s, r, h)."""

    sigma: float
    eta: float
    K: int
    r: float
    s: float
    h: float = 0.1
    kappa: float = 1.0
    tau: float = 1.0
    upsilon: float = 1 / 54
    upsilon_tilde: float = 4 / 9
    a_const: float = 2.0**-6
    b_const: float = 2.0**-6
    K_rep: int | None = None
    strict: bool = False
    prune: float = PRUNE

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K debe ser ≥ 1")
        if self.sigma <= 0 or self.r <= 0 or self.h <= 0:
            raise ValueError("σ, r y h deben ser > 0")
        if not 0 < self.eta <= 1:
            raise ValueError("η debe estar en (0, 1]")

    @property
    def k_rep(self) -> int:
        return self.K_rep if self.K_rep is not None else 2 * self.K

    @property
    def s_next(self) -> float:
        return max(self.s - 5 * self.sigma, 0.0)

    @property
    def r_next(self) -> float:
        return self.eta * self.r

    @property
    def h_next(self) -> float:
        return self.upsilon_tilde * self.h


# ------------------------------------------------------------------
# Series de Lie
# ------------------------------------------------------------------

def lie_series(G: FourierTaylor, F: FourierTaylor, K_rep: int, prune: float = PRUNE,
               max_terms: int = MAX_TERMS) -> FourierTaylor:
    """G∘Φ_F = Σ_{m≥0} ad_F^m G / m!."""
    out = G.truncate(K_rep)
    term = out
    if F.is_zero():
        return out
    for m in range(1, max_terms + 2):
        term = (poisson_bracket(term, F).truncate(K_rep) / m).chop(prune)
        if term.is_zero():
            break
        if m > max_terms:
            raise SeriesNotConverged(max_terms, term.l1())
        out = out + term
    return out


def _coordinate_series(seed: FourierTaylor, F: FourierTaylor, K_rep: int, prune: float) -> FourierTaylor:
    """Σ_{m≥1} ad_F^{m−1}(seed) / m!."""
    out = seed.truncate(K_rep)
    term = out
    if term.is_zero():
        return out
    for m in range(2, MAX_TERMS + 2):
        term = (poisson_bracket(term, F).truncate(K_rep) / m).chop(prune)
        if term.is_zero():
            break
        if m > MAX_TERMS:
            raise SeriesNotConverged(MAX_TERMS, term.l1())
        out = out + term
    return out


def apply_stack(G: FourierTaylor, stack: Sequence["TorusTransform"], K_rep: int | None = None) -> FourierTaylor:
    """G∘Φ₀∘…∘Φ_j: Φ₀ se aplica primero. Lineal en G."""
    for T in stack:
        G = lie_series(G, T.generator, K_rep if K_rep is not None else T.K_rep, T.prune)
    return G


# ------------------------------------------------------------------
# Transformación
# ------------------------------------------------------------------

@dataclass
class TorusTransform:
    """Φ(θ, I) = (θ + u(θ), V(θ, I)) con V afín en I."""

    generator: FourierTaylor
    u: list[FourierTaylor]
    V: list[FourierTaylor]
    xi_before: np.ndarray
    xi_after: np.ndarray
    s: float
    r: float
    h: float
    K_rep: int
    prune: float = PRUNE

    @classmethod
    def from_generator(cls, F: FourierTaylor, K_rep: int, xi_before, xi_after,
                       s: float, r: float, h: float, prune: float = PRUNE) -> "TorusTransform":
        n = F.n
        u = [_coordinate_series(F.derivative_action(i), F, K_rep, prune) for i in range(n)]
        V = [FourierTaylor.action(n, i) + _coordinate_series(-F.derivative_theta(i), F, K_rep, prune)
             for i in range(n)]
        return cls(F, u, V, np.asarray(xi_before), np.asarray(xi_after), s, r, h, K_rep, prune)

    @classmethod
    def identity(cls, n: int, xi) -> "TorusTransform":
        return cls.from_generator(FourierTaylor.zeros(n), 0, xi, xi, 0.0, 0.0, 0.0)

    @property
    def n(self) -> int:
        return self.generator.n

    @cached_property
    def _du(self) -> list[list[FourierTaylor]]:
        return [[ui.derivative_theta(k) for k in range(self.n)] for ui in self.u]

    @cached_property
    def _dV_theta(self) -> list[list[FourierTaylor]]:
        return [[Vi.derivative_theta(k) for k in range(self.n)] for Vi in self.V]

    @cached_property
    def _dV_action(self) -> list[list[FourierTaylor]]:
        return [[Vi.derivative_action(k) for k in range(self.n)] for Vi in self.V]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Imagen de puntos (P, 2n) = (θ, I). Salida compleja."""
        points = np.atleast_2d(np.asarray(points, dtype=complex))
        n = self.n
        theta, actions = points[:, :n], points[:, n:]
        out = np.empty_like(points)
        for i in range(n):
            out[:, i] = theta[:, i] + self.u[i].evaluate(theta)
            out[:, n + i] = self.V[i].evaluate(theta, actions)
        return out

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        """DΦ en cada punto, forma (P, 2n, 2n); ∂U/∂I = 0."""
        points = np.atleast_2d(np.asarray(points, dtype=complex))
        n = self.n
        theta, actions = points[:, :n], points[:, n:]
        J = np.zeros((points.shape[0], 2 * n, 2 * n), dtype=complex)
        for i in range(n):
            for k in range(n):
                J[:, i, k] = (i == k) + self._du[i][k].evaluate(theta)
                J[:, n + i, k] = self._dV_theta[i][k].evaluate(theta, actions)
                J[:, n + i, n + k] = self._dV_action[i][k].evaluate(theta, actions)
        return J

    def deformation(self, s: float, r: float, sigma: float) -> float:
        """|W(Φ − id)| con W = diag(σ⁻¹ Id, r⁻¹ Id) sobre D_{s,r}."""
        n = self.n
        du = max((strip_sup_bound(ui, s, r).value for ui in self.u), default=0.0)
        dv = max(
            (strip_sup_bound(Vi - FourierTaylor.action(n, i), s, r).value for i, Vi in enumerate(self.V)),
            default=0.0,
        )
        if r <= 0:
            return math.inf if dv > 0 else du / sigma
        return max(du / sigma, dv / r)


def symplectic_form(n: int) -> np.ndarray:
    return np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])


def symplectic_defect(jacobians: np.ndarray) -> float:
    """max |DΦᵀ J DΦ − J| sobre las matrices dadas."""
    dim = jacobians.shape[-1]
    Jm = symplectic_form(dim // 2)
    M = np.einsum("pji,jk,pkl->pil", jacobians, Jm, jacobians)
    return float(np.abs(M - Jm).max(initial=0.0))


# ------------------------------------------------------------------
# Residuos y normas
# ------------------------------------------------------------------

def normal_form(H: FourierTaylor, omega: Sequence[complex]) -> FourierTaylor:
    """N = [H]₀ + ⟨ω, I⟩ + ½⟨A I, I⟩ con A la Hessiana promedio."""
    n = H.n
    avg = H.average()
    return (FourierTaylor.constant(n, avg[0]) + linear_series(n, omega)
            + quadratic_series(n, H.average_hessian()))


def normal_form_residual(H: FourierTaylor, omega: Sequence[complex]) -> float:
    """ℓ¹ de los modos k ≠ 0 en grado ≤ 1 más |[∂_I H] − ω|₁."""
    low = H.up_to_degree(1).mean_free()
    drift = np.abs(H.average_linear() - np.asarray(omega)).sum()
    return float(low.l1() + drift)


# ------------------------------------------------------------------
# Paso
# ------------------------------------------------------------------

@dataclass
class StepReport:
    K: int
    sigma: float
    eta: float
    eps: float
    p_plus: float
    deformation: float
    phi_shift: float
    residual_before: float
    residual_after: float
    error_ratio: float
    deformation_ratio: float
    symplectic_defect: float = math.nan
    flags: dict[str, bool] = field(default_factory=dict)

    @staticmethod
    def header() -> list[str]:
        return ["K", "sigma", "eta", "eps", "p_plus", "deformation", "phi_shift",
                "residual_before", "residual_after", "error_ratio", "deformation_ratio",
                "flag_a", "flag_b", "flag_c"]

    def row(self) -> list:
        vals = [self.sigma, self.eta, self.eps, self.p_plus, self.deformation, self.phi_shift,
                self.residual_before, self.residual_after, self.error_ratio, self.deformation_ratio]
        return [self.K] + [repr(float(v)) for v in vals] + [
            str(self.flags.get(f, True)).lower() for f in ("a", "b", "c")
        ]


@dataclass
class StepResult:
    transform: TorusTransform
    H: FourierTaylor
    N: FourierTaylor
    P: FourierTaylor
    xi: np.ndarray
    report: StepReport


def step_conditions(eps: float, params: StepParams) -> dict[str, tuple[float, float]]:
    """(valor, límite) de las condiciones (a), (b), (c)."""
    p = params
    return {
        "a": (eps, p.a_const * p.kappa * p.eta * p.r * p.sigma ** (p.tau + 1)),
        "b": (eps, p.b_const * p.upsilon * p.h * p.r),
        "c": (p.h, p.kappa / (2 * p.K ** (p.tau + 1))),
    }


def _ratio(value: float, template: float) -> float:
    if value == 0.0:
        return 0.0
    return value / template if template > 0 else math.inf


def reparameterise(
    H: FourierTaylor,
    omega: np.ndarray,
    family: HamiltonianFamily,
    xi: np.ndarray,
    stack: Sequence[TorusTransform],
    params: StepParams,
) -> tuple[FourierTaylor, np.ndarray]:
    """Elige ξ′ con [∂_I H_{ξ′}∘Ψ] ≈ ω usando el modelo de frecuencia de la familia."""
    model = family.frequency_model
    target = omega - H.average_linear() + model(xi)
    if not np.iscomplexobj(omega):
        target = target.real
    res = invert_near_identity(lambda u: u - model(u), target, h=params.h, upsilon=params.upsilon)
    xi_new = np.asarray(res.point)
    if np.array_equal(xi_new, xi):
        return H, xi
    delta = family.member(xi_new) - family.member(xi)
    return H + apply_stack(delta, stack, params.k_rep), xi_new


def kam_step(
    H: FourierTaylor,
    omega: Sequence[complex],
    params: StepParams,
    family: HamiltonianFamily | None = None,
    xi: Sequence[complex] | None = None,
    stack: Sequence[TorusTransform] = (),
) -> StepResult:
    """Un paso: reparametriza ξ, resuelve las ecuaciones homológicas y transforma H."""
    omega = np.asarray(omega)
    n = H.n
    K_rep = params.k_rep
    xi_cur = np.asarray(xi if xi is not None else omega)
    if family is not None:
        H, xi_new = reparameterise(H, omega, family, xi_cur, stack, params)
    else:
        xi_new = xi_cur

    residual_before = normal_form_residual(H, omega)
    N = normal_form(H, omega)
    P = H - N
    eps = strip_sup_bound(P, params.s, params.r).value

    flags = {}
    for which, (value, limit) in step_conditions(eps, params).items():
        flags[which] = value <= limit
        if not flags[which]:
            if params.strict:
                raise ConditionViolated(which, value, limit)
            logger.debug(f"Condición ({which}) no se cumple: {value:.3e} > {limit:.3e}")

    A = H.average_hessian()
    F0 = solve_homological(H.part(0), omega, params.K)
    F = F0
    for j in range(n):
        m = [0] * n
        m[j] = 1
        g1 = H.coefficient(m)
        for i in range(n):
            if A[j, i] != 0:
                g1 = g1 - F0.derivative_theta(i) * A[j, i]
        F = F + solve_homological(g1, omega, params.K).times_monomial(m)
    F = F.chop(params.prune)

    H_next = lie_series(H, F, K_rep, params.prune)
    N_next = normal_form(H_next, omega)
    P_next = H_next - N_next
    transform = TorusTransform.from_generator(
        F, K_rep, xi_cur, xi_new, params.s_next, params.r_next, params.h_next, params.prune
    )

    p_plus = strip_sup_bound(P_next, params.s_next, params.r_next).value
    deformation = transform.deformation(params.s_next, params.r_next, params.sigma)
    err_template = (params.eta**2 + params.K**n * math.exp(-params.K * params.sigma)) * eps
    template = params.kappa * params.r * params.sigma ** (params.tau + 1)
    prop = eps / template if template > 0 else math.inf
    report = StepReport(
        K=params.K,
        sigma=params.sigma,
        eta=params.eta,
        eps=eps,
        p_plus=p_plus,
        deformation=deformation,
        phi_shift=float(np.abs(xi_new - xi_cur).max(initial=0.0)),
        residual_before=residual_before,
        residual_after=normal_form_residual(H_next, omega),
        error_ratio=_ratio(p_plus, err_template),
        deformation_ratio=_ratio(deformation, prop),
        flags=flags,
    )
    logger.debug(
        f"Paso K={params.K}: ε={eps:.3e} |P₊|={p_plus:.3e} "
        f"residuo {report.residual_before:.3e} → {report.residual_after:.3e}"
    )
    return StepResult(transform, H_next, N_next, P_next, xi_new, report)
