"""
torus_forge/kam/schedule.py — Esquema súper-exponencial de parámetros KAM

Todas las magnitudes que decaen (E_j, r_j, h_j, ε_j, ε̃_j) se guardan en
escala logarítmica: para j ≳ 10 se van por debajo del menor float.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from torus_forge.errors import MinSigma, NoRoot

logger = logging.getLogger(__name__)

GEVREY = "gevrey"
ANALYTIC = "analytic"

FLAG_NAMES = ("a", "b", "c", "h_ratio", "h_ratio_asymptotic", "eps_gap", "kappa", "s0")


@dataclass(frozen=True)
class ScheduleParams:
    rho: float
    tau: float
    n: int
    kappa: float
    r0: float
    L1: float = 1.0
    L2: float = 1.0
    varsigma: float = 0.0
    c1: float = 2.0
    sigma: float = 0.1
    a_const: float = 2.0**-6
    b_const: float = 2.0**-6
    eps_hat: float = 1.0
    j_max: int = 20
    mode: str = GEVREY
    tau_prime: float | None = None
    upsilon: float = 1 / 54
    upsilon_tilde: float = 4 / 9
    sigma_floor: float = 1e-12
    h_ratio_tol: float = 0.05
    h_ratio_from: int = 5

    def __post_init__(self):
        if self.tau <= self.n - 1:
            raise ValueError(f"τ={self.tau} debe ser > n−1={self.n - 1}")
        if self.mode == GEVREY and self.rho <= 1:
            raise ValueError("el modo gevrey necesita ρ > 1")
        if self.mode == ANALYTIC and (self.tau_prime is None or self.tau_prime <= self.tau):
            raise ValueError("el modo analítico necesita τ′ > τ")
        if self.mode not in (GEVREY, ANALYTIC):
            raise ValueError(f"modo desconocido: {self.mode}")
        if self.kappa <= 0 or self.r0 <= 0:
            raise ValueError("κ y r₀ deben ser > 0")
        if self.c1 <= 1:
            raise ValueError("c₁ debe ser > 1")
        if not 0 < self.eps_hat <= 1:
            raise ValueError("ε̂ debe estar en (0, 1]")

    @property
    def rho_eff(self) -> float:
        """ρ del esquema; en modo analítico (τ′−τ)/(τ+1) + 1."""
        if self.mode == ANALYTIC:
            return (self.tau_prime - self.tau) / (self.tau + 1) + 1
        return self.rho

    @property
    def rho_prime(self) -> float:
        if self.mode == ANALYTIC:
            return self.tau_prime + 2
        return self.rho * (self.tau + 1) + 1


# ------------------------------------------------------------------
# Ecuación del corte
# ------------------------------------------------------------------

def solve_cutoff(
    sigma: float,
    E: float | None,
    n: int,
    log_E: float | None = None,
    tol: float = 1e-12,
    max_iter: int = 100,
) -> float:
    """x con x − n ln x = −ln E − n ln σ (rama x > n); K = x/σ cumple K^n e^{−Kσ} = E."""
    if log_E is None:
        if E is None or E <= 0:
            raise ValueError("E debe ser > 0")
        log_E = math.log(E)
    rhs = -log_E - n * math.log(sigma)
    return solve_cutoff_rhs(rhs, n, tol=tol, max_iter=max_iter)


def solve_cutoff_rhs(rhs: float, n: int, tol: float = 1e-12, max_iter: int = 100) -> float:
    """Newton para x − n ln x = rhs sobre la rama x > n."""
    if n == 0:
        return float(rhs)
    if rhs <= n:
        raise NoRoot(rhs, n)
    x = rhs + n * math.log(rhs)
    for _ in range(max_iter):
        g = x - n * math.log(x) - rhs
        if abs(g) <= tol * max(1.0, abs(rhs)):
            return x
        x = max(x - g / (1 - n / x), n * (1 + 1e-12))
    raise NoRoot(rhs, n)


# ------------------------------------------------------------------
# Esquema
# ------------------------------------------------------------------

@dataclass
class KamSchedule:
    params: ScheduleParams
    sigma: float
    delta: float
    B0: float
    B: float
    s: np.ndarray
    sigma_j: np.ndarray
    x: np.ndarray
    K: np.ndarray
    log_E: np.ndarray
    log_eta: np.ndarray
    log_r: np.ndarray
    log_h: np.ndarray
    log_eps: np.ndarray
    log_eps_tilde: np.ndarray
    flags: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def levels(self) -> int:
        return len(self.sigma_j)

    @property
    def rho_prime(self) -> float:
        return self.params.rho_prime

    @property
    def E(self) -> np.ndarray:
        return np.exp(self.log_E)

    @property
    def eta(self) -> np.ndarray:
        return np.exp(self.log_eta)

    @property
    def r(self) -> np.ndarray:
        return np.exp(self.log_r)

    @property
    def h(self) -> np.ndarray:
        return np.exp(self.log_h)

    @property
    def eps(self) -> np.ndarray:
        return np.exp(self.log_eps)

    def h_ratios(self) -> np.ndarray:
        return np.exp(np.diff(self.log_h))

    def failing(self) -> list[str]:
        return [name for name, vals in self.flags.items() if not bool(np.all(vals))]

    def all_flags_pass(self) -> bool:
        return not self.failing()

    @staticmethod
    def header() -> list[str]:
        return ["j", "s_j", "sigma_j", "log_r_j", "log_h_j", "log_E_j", "x_j", "K_j",
                "log_eta_j", "log_eps_j", "log_eps_tilde_j"] + [f"flag_{f}" for f in FLAG_NAMES]

    def rows(self) -> list[list]:
        out = []
        for j in range(self.levels):
            row = [j] + [repr(float(v)) for v in (
                self.s[j], self.sigma_j[j], self.log_r[j], self.log_h[j], self.log_E[j],
                self.x[j], self.K[j], self.log_eta[j], self.log_eps[j], self.log_eps_tilde[j],
            )]
            row += [str(bool(self.flags[f][j])).lower() if f in self.flags else "" for f in FLAG_NAMES]
            out.append(row)
        return out


def _compute(params: ScheduleParams, sigma: float) -> KamSchedule:
    p = params
    rho = p.rho_eff
    expo = 1.0 / (rho - 1)
    delta = (2.0 / 3.0) ** (rho - 1)
    sigma0 = sigma / p.L1 * math.log(p.L1 + math.e) ** (-(rho - 1))
    if p.mode == GEVREY:
        s0 = 5 * sigma0 / (1 - delta)
        B0 = 0.75 * (rho - 1) * (40 * p.L1 / (1 - delta)) ** (-expo)
        B = B0 / 2 * (delta ** (-expo) - 1)
    else:
        s0 = 20 * sigma0 / (1 - delta)
        B0 = math.nan
        B = 1.0

    J = p.j_max + 1
    j = np.arange(J)
    sigma_j = sigma0 * delta**j
    s = s0 * delta**j
    log_E = -math.log(p.c1) - B * sigma_j ** (-expo)
    log_eta = log_E / 2
    log_r = math.log(p.r0) + np.concatenate([[0.0], np.cumsum(log_eta[:-1])])
    x = np.array([solve_cutoff(float(sj), None, p.n, log_E=float(le)) for sj, le in zip(sigma_j, log_E)])
    K = x / sigma_j
    log_h = math.log(p.kappa) - math.log(2) - (p.tau + 1) * np.log(K)
    log_eps = (math.log(p.eps_hat) + math.log(p.kappa) + log_r
               + (p.tau + 1) * np.log(sigma_j) + log_E)
    if p.mode == GEVREY:
        log_eps_tilde = (math.log(p.eps_hat) + math.log(p.kappa) + math.log(p.r0)
                         + (p.tau + 1) * math.log(sigma0) - B0 * sigma_j ** (-expo))
    else:
        log_eps_tilde = np.full(J, -np.inf)

    flags: dict[str, np.ndarray] = {}
    flags["a"] = math.log(p.eps_hat) + log_eta <= math.log(p.a_const)
    flags["b"] = log_eps <= math.log(p.b_const * p.upsilon) + log_h + log_r
    flags["c"] = log_h <= math.log(p.kappa) - math.log(2) - (p.tau + 1) * np.log(K) + 1e-12
    h_ratio_ok = np.ones(J, dtype=bool)
    h_ratio_ok[:-1] = np.diff(log_h) <= math.log(p.upsilon_tilde)
    flags["h_ratio"] = h_ratio_ok
    if p.mode == GEVREY:
        eps_gap = np.ones(J, dtype=bool)
        eps_gap[:-1] = log_eps_tilde[:-1] <= math.log(0.5) + log_eps[1:]
        target = (p.tau + 1) * p.rho * math.log(2.0 / 3.0)
        asymptotic = np.ones(J, dtype=bool)
        tail = np.abs(np.expm1(np.diff(log_h)[p.h_ratio_from:] - target))
        asymptotic[p.h_ratio_from:J - 1] = tail <= p.h_ratio_tol
        flags["h_ratio_asymptotic"] = asymptotic
        flags["eps_gap"] = eps_gap
    else:
        flags["s0"] = np.full(J, s0 <= 1 / (2 * p.L1))
    limit = p.L2 ** (-1 - p.varsigma)
    flags["kappa"] = np.full(J, p.kappa <= limit and p.r0 <= limit)

    return KamSchedule(
        params=p, sigma=sigma, delta=delta, B0=B0, B=B, s=s, sigma_j=sigma_j, x=x, K=K,
        log_E=log_E, log_eta=log_eta, log_r=log_r, log_h=log_h, log_eps=log_eps,
        log_eps_tilde=log_eps_tilde, flags=flags,
    )


def build_schedule(params: ScheduleParams) -> KamSchedule:
    """Llena el esquema hasta j_max achicando σ a la mitad hasta que todas las banderas pasen."""
    sigma = params.sigma
    failing: list[str] = []
    while sigma >= params.sigma_floor:
        try:
            sched = _compute(params, sigma)
        except NoRoot as e:
            logger.debug(f"σ={sigma:.3e}: sin raíz del corte ({e})")
            failing = ["cutoff"]
        else:
            failing = sched.failing()
            if not failing:
                logger.info(
                    f"Esquema: σ={sigma:.3e} σ₀={sched.sigma_j[0]:.3e} δ={sched.delta:.6f} "
                    f"B={sched.B:.4e} K₀={sched.K[0]:.3e}"
                )
                return sched
            if "kappa" in failing:
                break
            logger.debug(f"σ={sigma:.3e}: fallan {failing}")
        sigma /= 2
    raise MinSigma(sigma, failing)
