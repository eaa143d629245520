"""
torus_forge/normal_form/generating.py — Función generatriz y forma normal exacta

Cada toro Λ_ω es un grafo I = F(x, ω) sobre el ángulo x. Si Λ_ω es lagrangiano,
F = ∇_x ψ con ψ(x, ω) = ⟨x, R(ω)⟩ + Q(x, ω), Q periódica y R(ω) la acción del
toro. Con ω(J) la inversa de J = R(ω), la función generatriz

    Φ(x, J) = ⟨x, J⟩ + Q(x, ω(J))

define χ: (φ, J) ↦ (x, y) por φ = ∂_J Φ, y = ∂_x Φ. La dependencia en ω de Q
y R sale de la extensión de Whitney de sus jets sobre la grilla.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from torus_forge.certs.inversion import invert_near_identity
from torus_forge.errors import (
    ConditionViolated,
    ContractionViolated,
    GeneratingDegenerate,
    InversionFailure,
    MaxIterations,
    NotLagrangian,
)
from torus_forge.kam.iterate import TorusJet, theta_grid
from torus_forge.kam.jets import multi_indices
from torus_forge.kam.step import symplectic_defect
from torus_forge.model.family import ParamFamily, expand_family, _gauss_unit
from torus_forge.model.presets.base import IntegrableHamiltonian
from torus_forge.series.fourier import FourierTaylor, strip_sup_bound
from torus_forge.whitney.extension import (
    ModeJets,
    WhitneyExtension,
    WhitneyJet,
    extend_jet,
    fourier_modes,
    nyquist_split,
    fourier_weight,
    gevrey_bump,
)

logger = logging.getLogger(__name__)

Beta = tuple[int, ...]

# Soporte del bump de periodización: (π/2, 7π/2) por eje
_BUMP_CENTER = 2 * math.pi
_BUMP_HALF = 1.5 * math.pi


def _unit(n: int, *axes: int) -> Beta:
    beta = [0] * n
    for a in axes:
        beta[a] += 1
    return tuple(beta)


# ------------------------------------------------------------------
# Reducción a la familia
# ------------------------------------------------------------------

@dataclass
class ReducedFamily:
    kappa: float
    eps_H: float
    r: float
    R: float
    degenerate: bool
    family: ParamFamily = field(repr=False)
    norm: float
    template: float

    @property
    def template_ratio(self) -> float:
        """‖P‖ / ((A+1)κr√ε_H); 0 en el caso integrable."""
        if self.template == 0:
            return 0.0 if self.norm == 0 else math.inf
        return self.norm / self.template


def reduce_to_family(
    H0: IntegrableHamiltonian,
    H1: FourierTaylor,
    kappa: float,
    omegas: Sequence[Sequence[float]],
    eps_H: float | None = None,
    threshold: float = 1e-2,
) -> ReducedFamily:
    """r = R = κ√ε_H y la familia expandida con ese radio.

    Sin ε_H explícito se toma ‖H¹‖ = κ²ε_H sobre D⁰.
    """
    if eps_H is None:
        reach = max(max(abs(lo), abs(hi)) for lo, hi in H0.box)
        eps_H = strip_sup_bound(H1, 0.0, reach).value / kappa**2
    if eps_H > threshold:
        raise ConditionViolated("eps_H", eps_H, threshold)
    r = kappa * math.sqrt(eps_H)
    family = expand_family(H0, H1, omegas, R=r)
    A = H0.gevrey.A0
    template = (A + 1) * kappa * r * math.sqrt(eps_H)
    reduced = ReducedFamily(kappa, eps_H, r, r, eps_H == 0, family, family.norm_bound, template)
    logger.info(
        f"Reducción: ε_H={eps_H:.3e} r=R={r:.3e} ‖P‖={reduced.norm:.3e} "
        f"(plantilla {template:.3e})" + (" [integrable]" if reduced.degenerate else "")
    )
    return reduced


# ------------------------------------------------------------------
# Interpolación trigonométrica
# ------------------------------------------------------------------

class TrigInterpolant:
    """Interpolante de valores (P, C) en la grilla θ de G^n puntos."""

    def __init__(self, values: np.ndarray, n: int, grid_size: int):
        values = np.asarray(values, dtype=float)
        self.n = n
        self.modes = fourier_modes(n, grid_size)
        grid = values.reshape((grid_size,) * n + (values.shape[-1],))
        coeffs = np.fft.fftn(grid, axes=tuple(range(n))) / grid_size**n
        split = nyquist_split(self.modes, grid_size)[:, None]
        self.coeffs = coeffs[tuple((self.modes % grid_size).T)] * split

    def __call__(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        return (np.exp(1j * theta @ self.modes.T) @ self.coeffs).real

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        """(Q, C, n) con ∂/∂θ_j en el último eje."""
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        E = np.exp(1j * theta @ self.modes.T)
        cols = [(E @ (self.coeffs * (1j * self.modes[:, j])[:, None])).real for j in range(self.n)]
        return np.stack(cols, axis=-1)


# ------------------------------------------------------------------
# Grafo del toro
# ------------------------------------------------------------------

def _solve_angle(g: TrigInterpolant, x: np.ndarray) -> np.ndarray:
    """θ con θ + g(θ) = x."""
    try:
        res = invert_near_identity(lambda u: -g(u[None, :])[0], x, h=1.0, upsilon=1 / 8, tol=1e-14)
    except (ContractionViolated, MaxIterations) as e:
        raise InversionFailure(f"θ + (U − θ)(θ) = x no se invierte en x={tuple(x)}: {e}") from e
    return np.asarray(res.point, dtype=float)


def graph_jet(jet: TorusJet, family, m_max: int = 1, **constants) -> WhitneyJet:
    """Jet de F(x, ω) = I sobre Λ_ω, canales = grilla x (G^n) × componente."""
    if m_max > 1:
        raise ValueError("el grafo sólo lleva jets de orden ≤ 1")
    n, G = jet.n, jet.grid_size
    P = G**n
    zero = (0,) * n
    betas = multi_indices(n, m_max)
    xs = theta_grid(n, G)
    table: dict[Beta, list[np.ndarray]] = {b: [] for b in betas}

    for s, run in enumerate(jet.runs):
        source = jet.derivatives[s] if jet.derivatives else {zero: jet.values(s)}
        vec = np.real(np.asarray(source[zero]))
        z0 = np.zeros(n) if run.z0 is None else np.real(run.z0)
        g_vals = vec[:P * n].reshape(P, n)
        Y_vals = z0 + vec[P * n:2 * P * n].reshape(P, n)
        channels = [g_vals, Y_vals]
        for i in range(n):
            if m_max == 0:
                break
            dvec = np.real(np.asarray(source[_unit(n, i)]))
            dxi = np.eye(n)[i] + dvec[2 * P * n:]
            dz0 = (np.linalg.solve(np.real(family.H0.hessian(z0)), dxi)
                   if isinstance(family, ParamFamily) else np.zeros(n))
            channels += [dvec[:P * n].reshape(P, n), dz0 + dvec[P * n:2 * P * n].reshape(P, n)]
        interp = TrigInterpolant(np.concatenate(channels, axis=1), n, G)
        g = TrigInterpolant(g_vals, n, G)

        theta = np.stack([_solve_angle(g, x) for x in xs])
        vals = interp(theta)
        table[zero].append(vals[:, n:2 * n].ravel())
        if m_max == 1:
            grad = interp.gradient(theta)
            Dg, DY = grad[:, :n, :], grad[:, n:2 * n, :]
            eye = np.eye(n)[None, :, :]
            for i in range(n):
                base = 2 * n + 2 * n * i
                dg, dY = vals[:, base:base + n], vals[:, base + n:base + 2 * n]
                dtheta = -np.linalg.solve(eye + Dg, dg[..., None])[..., 0]
                dF = dY + np.einsum("pcj,pj->pc", DY, dtheta)
                table[_unit(n, i)].append(dF.ravel())

    points = np.asarray(jet.omegas)
    return WhitneyJet(points, {b: np.stack(v) for b, v in table.items()}, m_max, **constants)


# ------------------------------------------------------------------
# Potencial generador
# ------------------------------------------------------------------

def _bump_1d(t: np.ndarray, rho_prime: float) -> np.ndarray:
    """Bump con soporte en (π/2, 7π/2) y Σ_m f(t − 2πm) = 1."""
    t = np.asarray(t, dtype=float)
    num = gevrey_bump((t - _BUMP_CENTER) / _BUMP_HALF, rho_prime)
    den = sum(gevrey_bump((t - _BUMP_CENTER - 2 * math.pi * m) / _BUMP_HALF, rho_prime)
              for m in range(-2, 3))
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


@dataclass
class _Local:
    """R, R′, R″ y los coeficientes de ∂_ω^β Q en un ω fijo."""

    omega: np.ndarray
    R: np.ndarray
    B: np.ndarray
    dB: np.ndarray
    q: dict[Beta, np.ndarray]


@dataclass
class GeneratingData:
    n: int
    grid_size: int
    F_jet: WhitneyJet = field(repr=False)
    R_jet: WhitneyJet = field(repr=False)
    Q_jet: WhitneyJet = field(repr=False)
    q_modes: ModeJets = field(repr=False)
    q_ext: WhitneyExtension = field(repr=False)
    r_ext: WhitneyExtension = field(repr=False)
    lagrangian_defect: float = 0.0
    gradient_residual: float = 0.0
    compatibility: float = 0.0
    rho_prime: float = 3.0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def samples(self) -> np.ndarray:
        return self.F_jet.points

    @property
    def actions(self) -> np.ndarray:
        """I(ω) en cada ω de la grilla."""
        return np.real(self.R_jet.values())

    @property
    def modes(self) -> np.ndarray:
        return self.q_modes.modes

    # -- ω fijo --------------------------------------------------------

    def local(self, omega: Sequence[float]) -> _Local:
        omega = np.asarray(omega, dtype=float)
        key = tuple(omega.tolist())
        if key in self._cache:
            return self._cache[key]
        n = self.n
        betas = multi_indices(n, 2)
        r_tab = self.r_ext.derivatives(omega[None, :], betas)
        q_tab = self.q_ext.derivatives(omega[None, :], betas)
        damp = self.q_modes.damping()
        R = np.real(r_tab[(0,) * n][0])
        B = np.stack([np.real(r_tab[_unit(n, i)][0]) for i in range(n)], axis=1)
        dB = np.zeros((n, n, n))
        for i in range(n):
            for m in range(n):
                dB[:, i, m] = np.real(r_tab[_unit(n, i, m)][0])
        loc = _Local(omega, R, B, dB, {b: q_tab[b][0] * damp for b in betas})
        if len(self._cache) > 4096:
            self._cache.clear()
        self._cache[key] = loc
        return loc

    def q_value(self, loc: _Local, x: np.ndarray, beta: Beta, alpha: Beta) -> np.ndarray:
        """∂_x^α ∂_ω^β Q(x, ω) en puntos x (P, n)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        factor = np.prod((1j * self.modes) ** np.asarray(alpha), axis=1)
        return (np.exp(1j * x @ self.modes.T) @ (loc.q[beta] * factor)).real

    def Q(self, x: np.ndarray, omega: Sequence[float]) -> np.ndarray:
        zero = (0,) * self.n
        return self.q_value(self.local(omega), x, zero, zero)

    def R(self, omega: Sequence[float]) -> np.ndarray:
        return self.local(omega).R

    # -- potencial por integral de línea -------------------------------

    def field_at(self, index: int) -> TrigInterpolant:
        key = ("field", index)
        if key not in self._cache:
            values = np.real(self.F_jet.values()[index]).reshape(-1, self.n)
            self._cache[key] = TrigInterpolant(values, self.n, self.grid_size)
        return self._cache[key]

    def psi_line(self, x: np.ndarray, index: int, path: str = "radial", nodes: int = 48) -> np.ndarray:
        """ψ̃(x) = ∫ ⟨F, dx⟩ desde 0: radial ∫₀¹⟨F(tx), x⟩dt o por ejes."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        F = self.field_at(index)
        t, w = _gauss_unit(nodes)
        out = np.zeros(x.shape[0])
        if path == "radial":
            for tk, wk in zip(t, w):
                out += wk * np.sum(F(tk * x) * x, axis=1)
            return out
        if path != "axis":
            raise ValueError(f"camino desconocido: {path}")
        for j in range(self.n):
            for tk, wk in zip(t, w):
                p = np.zeros_like(x)
                p[:, :j] = x[:, :j]
                p[:, j] = tk * x[:, j]
                out += wk * F(p)[:, j] * x[:, j]
        return out

    def q_tilde(self, x: np.ndarray, index: int) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.psi_line(x, index) - x @ self.actions[index]

    def q_periodized(self, x: np.ndarray, index: int) -> np.ndarray:
        """Σ_k (f·Q̃)(x − 2πk) con f el bump Gevrey de soporte (π/2, 7π/2)^n."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for p, xp in enumerate(x):
            shifts = []
            for xi in xp:
                lo = math.ceil((xi - 3.5 * math.pi) / (2 * math.pi))
                hi = math.floor((xi - 0.5 * math.pi) / (2 * math.pi))
                shifts.append(range(lo, hi + 1))
            acc = 0.0
            for k in np.array(np.meshgrid(*shifts, indexing="ij")).reshape(self.n, -1).T:
                z = xp - 2 * math.pi * k
                weight = float(np.prod(_bump_1d(z, self.rho_prime)))
                if weight:
                    acc += weight * float(self.q_tilde(z[None, :], index)[0])
            out[p] = acc
        return out

    def period_defect(self, index: int, points: int = 8, seed: int = 0) -> float:
        """max |Q̃(x + 2πe_j) − Q̃(x)| en puntos al azar."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(0, 2 * np.pi, (points, self.n))
        base = self.q_tilde(x, index)
        worst = 0.0
        for j in range(self.n):
            shifted = x.copy()
            shifted[:, j] += 2 * np.pi
            worst = max(worst, float(np.abs(self.q_tilde(shifted, index) - base).max()))
        return worst

    # -- inversa del mapa de frecuencias -------------------------------

    def nearest_sample(self, J: np.ndarray) -> int:
        return int(np.abs(self.actions - np.asarray(J)[None, :]).max(axis=1).argmin())

    def omega_of_I(self, J: Sequence[float], tol: float = 1e-14) -> np.ndarray:
        """ω con R(ω) = J por punto fijo cerca de la identidad, centrado en la muestra más cercana."""
        J = np.asarray(J, dtype=float)
        c = self.samples[self.nearest_sample(J)]
        Binv = np.linalg.inv(self.local(c).B)

        def F(u: np.ndarray) -> np.ndarray:
            return u - c - Binv @ (self.local(u).R - J)

        try:
            res = invert_near_identity(F, c, tol=tol, max_iter=100, check=False)
        except MaxIterations as e:
            raise InversionFailure(f"ω(I) no converge en I={tuple(J)}: {e}") from e
        return np.asarray(res.point, dtype=float)

    def generating(self, x: np.ndarray, J: Sequence[float]) -> np.ndarray:
        """Φ(x, J) = ⟨x, J⟩ + Q(x, ω(J))."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x @ np.asarray(J, dtype=float) + self.Q(x, self.omega_of_I(J))


def generating_potential(
    F_jet: WhitneyJet,
    grid_size: int,
    c0: float = 1.0,
    lagrangian_tol: float = 1e-8,
) -> GeneratingData:
    """Separa F = R(ω) + ∇_x Q y extiende los jets de R y Q a todo Ω."""
    n = F_jet.m
    S = F_jet.size
    G = grid_size
    modes = fourier_modes(n, G)
    index = tuple((modes % G).T)
    split = nyquist_split(modes, G)
    k2 = (modes**2).sum(axis=1).astype(float)
    zero_mode = int(np.flatnonzero(k2 == 0)[0])
    xs = theta_grid(n, G)
    E = np.exp(1j * xs @ modes.T)

    R_table, Q_table = {}, {}
    defect = residual = 0.0
    for beta, val in F_jet.derivatives.items():
        grid = np.real(val).reshape((S,) + (G,) * n + (n,))
        Fk = (np.fft.fftn(grid, axes=tuple(range(1, n + 1))) / G**n)[(slice(None),) + index]
        Fk = Fk * split[None, :, None]
        R_table[beta] = np.real(Fk[:, zero_mode, :])
        Qk = -1j * np.einsum("smj,mj->sm", Fk, modes) / np.where(k2 > 0, k2, 1.0)[None, :]
        Qk[:, zero_mode] = 0.0
        Q_table[beta] = (Qk @ E.T).real
        if sum(beta) == 0:
            for i in range(n):
                for j in range(i + 1, n):
                    curl = 1j * (modes[None, :, i] * Fk[:, :, j] - modes[None, :, j] * Fk[:, :, i])
                    defect = max(defect, float(np.abs(curl).sum(axis=1).max()))
            grad = np.stack([(Qk * (1j * modes[None, :, j])) @ E.T for j in range(n)], axis=-1).real
            recon = R_table[beta][:, None, :] + grad
            residual = float(np.abs(recon - grid.reshape(S, -1, n)).max())

    if defect > lagrangian_tol:
        raise NotLagrangian(defect)

    constants = dict(A=F_jet.A, C1=F_jet.C1, C2=F_jet.C2, rho=F_jet.rho, rho_prime=F_jet.rho_prime)
    R_jet = WhitneyJet(F_jet.points, R_table, F_jet.m_max, **constants)
    Q_jet = WhitneyJet(F_jet.points, Q_table, F_jet.m_max, **constants)
    q_modes = fourier_weight(Q_jet, n, G, c0=c0)
    compatibility = q_modes.jet.fit_constants().compatibility()[0] if S > 1 else 0.0
    if compatibility > 1:
        logger.warning(f"Jets de Q con compatibilidad de Taylor {compatibility:.2e} > 1")
    data = GeneratingData(
        n=n,
        grid_size=G,
        F_jet=F_jet,
        R_jet=R_jet,
        Q_jet=Q_jet,
        q_modes=q_modes,
        q_ext=extend_jet(q_modes.jet, check=False),
        r_ext=extend_jet(R_jet, check=False),
        lagrangian_defect=defect,
        gradient_residual=residual,
        compatibility=compatibility,
        rho_prime=F_jet.rho_prime,
    )
    logger.info(
        f"Potencial generador: {S} frecuencias, defecto lagrangiano {defect:.2e}, "
        f"residuo de gradiente {residual:.2e}"
    )
    return data


# ------------------------------------------------------------------
# Forma normal
# ------------------------------------------------------------------

@dataclass
class NormalForm:
    data: GeneratingData = field(repr=False)
    H0: IntegrableHamiltonian = field(repr=False)
    H1: FourierTaylor = field(repr=False)
    flat_set: np.ndarray
    degeneracy: float

    @property
    def n(self) -> int:
        return self.data.n

    def _angle(self, phi: np.ndarray, loc: _Local) -> np.ndarray:
        """x con x + B^{−T}∇_ωQ(x, ω) = φ."""
        n = self.n
        BinvT = np.linalg.inv(loc.B).T

        def F(x: np.ndarray) -> np.ndarray:
            a = np.array([self.data.q_value(loc, x, _unit(n, i), (0,) * n)[0] for i in range(n)])
            return -BinvT @ a

        try:
            res = invert_near_identity(F, phi, tol=1e-14, max_iter=100, check=False)
        except MaxIterations as e:
            raise InversionFailure(f"Φ_J(x, J) = φ no se invierte en φ={tuple(phi)}: {e}") from e
        return np.asarray(res.point, dtype=float)

    def _grouped(self, phi: np.ndarray, J: np.ndarray):
        phi = np.atleast_2d(np.asarray(phi, dtype=float))
        J = np.broadcast_to(np.asarray(J, dtype=float), phi.shape)
        groups: dict[tuple, list[int]] = {}
        for p, row in enumerate(J):
            groups.setdefault(tuple(row.tolist()), []).append(p)
        for key, rows in groups.items():
            loc = self.data.local(self.data.omega_of_I(np.array(key)))
            yield rows, phi[rows], loc

    def chi(self, phi: np.ndarray, J: np.ndarray) -> np.ndarray:
        """χ(φ, J) = (x, y), forma (P, 2n); J puede ser un solo punto."""
        n = self.n
        zero = (0,) * n
        phi = np.atleast_2d(np.asarray(phi, dtype=float))
        out = np.zeros((phi.shape[0], 2 * n))
        for rows, ph, loc in self._grouped(phi, J):
            x = np.stack([self._angle(p, loc) for p in ph])
            grad = np.stack([self.data.q_value(loc, x, zero, _unit(n, j)) for j in range(n)], axis=1)
            out[rows, :n] = x
            out[rows, n:] = loc.R[None, :] + grad
        return out

    def chi_jacobian(self, phi: np.ndarray, J: np.ndarray) -> np.ndarray:
        """Dχ por derivadas exactas de la generatriz, forma (P, 2n, 2n)."""
        n = self.n
        zero = (0,) * n
        phi = np.atleast_2d(np.asarray(phi, dtype=float))
        out = np.zeros((phi.shape[0], 2 * n, 2 * n))
        I = np.eye(n)
        for rows, ph, loc in self._grouped(phi, J):
            BinvT = np.linalg.inv(loc.B).T
            for row, p in zip(rows, ph):
                x = self._angle(p, loc)[None, :]

                def q(beta, alpha):
                    return float(self.data.q_value(loc, x, beta, alpha)[0])

                a = np.array([q(_unit(n, i), zero) for i in range(n)])
                Ax = np.array([[q(_unit(n, i), _unit(n, j)) for j in range(n)] for i in range(n)])
                Aw = np.array([[q(_unit(n, i, m), zero) for m in range(n)] for i in range(n)])
                Qxx = np.array([[q(zero, _unit(n, l, j)) for j in range(n)] for l in range(n)])
                dphi_dx = I + BinvT @ Ax
                dphi_dw = np.stack(
                    [BinvT @ Aw[:, m] - BinvT @ loc.dB[:, :, m].T @ BinvT @ a for m in range(n)], axis=1
                )
                M1 = np.block([[dphi_dx, dphi_dw], [np.zeros((n, n)), loc.B]])
                M2 = np.block([[I, np.zeros((n, n))], [Qxx, loc.B + Ax.T]])
                out[row] = M2 @ np.linalg.inv(M1)
        return out

    def chi_inverse(self, points: np.ndarray, tol: float = 1e-14) -> np.ndarray:
        """(x, y) ↦ (φ, J): ω con R(ω) + ∇_xQ(x, ω) = y, luego J = R(ω), φ = Φ_J."""
        n = self.n
        zero = (0,) * n
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros_like(points)
        for p, (x, y) in enumerate(zip(points[:, :n], points[:, n:])):
            c = self.data.samples[self.data.nearest_sample(y)]
            Binv = np.linalg.inv(self.data.local(c).B)

            def F(u: np.ndarray) -> np.ndarray:
                loc = self.data.local(u)
                grad = np.array([self.data.q_value(loc, x, zero, _unit(n, j))[0] for j in range(n)])
                return u - c - Binv @ (loc.R + grad - y)

            try:
                omega = np.asarray(invert_near_identity(F, c, tol=tol, max_iter=100, check=False).point)
            except MaxIterations as e:
                raise InversionFailure(f"χ⁻¹ no converge en {tuple(points[p])}: {e}") from e
            loc = self.data.local(omega)
            a = np.array([self.data.q_value(loc, x, _unit(n, i), zero)[0] for i in range(n)])
            out[p, :n] = x + np.linalg.inv(loc.B).T @ a
            out[p, n:] = loc.R
        return out

    def hamiltonian(self, points: np.ndarray) -> np.ndarray:
        """H(x, y) = H⁰(y) + H¹(x, y) en coordenadas originales."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.n
        x, y = points[:, :n], points[:, n:]
        kinetic = np.array([float(np.real(self.H0.value(row))) for row in y])
        return kinetic + self.H1.evaluate(x, y).real

    def H_tilde(self, phi: np.ndarray, J: np.ndarray) -> np.ndarray:
        return self.hamiltonian(self.chi(phi, J))

    def K(self, J: np.ndarray) -> float:
        """K(J) = H̃(0, J)."""
        return float(self.H_tilde(np.zeros((1, self.n)), J)[0])

    def remainder(self, phi: np.ndarray, J: np.ndarray) -> np.ndarray:
        return self.H_tilde(phi, J) - self.K(J)

    def flatness(self, grid: int = 8, delta: float = 1e-5) -> tuple[float, float]:
        """(sup |R|, sup |∂_J R| por diferencias centradas) sobre E_κ × grilla en φ."""
        phi = theta_grid(self.n, grid)
        sup_R = sup_dR = 0.0
        for J in self.flat_set:
            sup_R = max(sup_R, float(np.abs(self.remainder(phi, J)).max()))
            for i in range(self.n):
                step = delta * np.eye(self.n)[i]
                diff = (self.remainder(phi, J + step) - self.remainder(phi, J - step)) / (2 * delta)
                sup_dR = max(sup_dR, float(np.abs(diff).max()))
        return sup_R, sup_dR

    def torus_defect(self, grid: int = 16) -> float:
        """sup |y − F(x, ω)| sobre χ(T^n × {I(ω)}) para ω en la grilla."""
        phi = theta_grid(self.n, grid)
        worst = 0.0
        for s, J in enumerate(self.flat_set):
            image = self.chi(phi, J)
            graph = self.data.field_at(s)(image[:, :self.n])
            worst = max(worst, float(np.abs(image[:, self.n:] - graph).max()))
        return worst

    def symplecticity(self, samples: int = 100, spread: float | None = None, seed: int = 0) -> float:
        """max |DχᵀJDχ − J| en puntos al azar cerca de E_κ."""
        rng = np.random.default_rng(seed)
        if spread is None:
            spread = 0.25 * self.data.r_ext.width
        centers = self.flat_set[rng.integers(0, len(self.flat_set), samples)]
        J = centers + rng.uniform(-spread, spread, centers.shape)
        phi = rng.uniform(0, 2 * np.pi, (samples, self.n))
        return symplectic_defect(self.chi_jacobian(phi, J))


def build_chi(
    data: GeneratingData,
    H0: IntegrableHamiltonian,
    H1: FourierTaylor,
    tol: float = 1e-12,
) -> NormalForm:
    """Arma χ desde la generatriz; verifica ω(I) en E_κ y |Id − Φ_I| < 1."""
    n = data.n
    zero = (0,) * n
    flat = data.actions
    for s, J in enumerate(flat):
        omega = data.omega_of_I(J)
        if float(np.abs(omega - data.samples[s]).max()) > 1e3 * tol + 1e-12:
            raise InversionFailure(f"ω(I(ω_s)) = {tuple(omega)} ≠ ω_s = {tuple(data.samples[s])}")

    xs = theta_grid(n, data.grid_size)
    worst = 0.0
    for omega in data.samples:
        loc = data.local(omega)
        BinvT = np.linalg.inv(loc.B).T
        Ax = np.stack(
            [np.stack([data.q_value(loc, xs, _unit(n, i), _unit(n, j)) for j in range(n)], axis=1)
             for i in range(n)], axis=1
        )
        mixed = np.einsum("li,pij->plj", BinvT, Ax)
        worst = max(worst, float(np.abs(mixed).sum(axis=2).max()))
    if worst >= 1:
        raise GeneratingDegenerate(worst)
    logger.info(f"χ: {len(flat)} toros en E_κ, |Id − Φ_I| = {worst:.2e}")
    return NormalForm(data, H0, H1, np.asarray(flat), worst)
