"""
torus_forge/whitney/extension.py — Jets de Whitney: pesos de Fourier, extensión y ensamblado

Un jet es una tabla {β: ∂_ω^β f} sobre una muestra finita S ⊂ R^m, con varios
canales (modos de Fourier o puntos de la grilla en θ). La extensión es un
operador de tipo Whitney: partición de la unidad sobre una grilla de cubos de
lado ℓ, cada cubo toma el polinomio de Taylor del punto de S más cercano a su
centro y las funciones de la partición se arman con el perfil Gevrey

    b(t) = exp(−(1 − t²)^{−1/(ρ′−1)}),   |t| < 1.

Con ℓ ≤ (separación mínima de S)/4 todos los cubos que tocan un punto de S
usan ese mismo punto, así que la extensión reproduce el jet exactamente.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from torus_forge.errors import IncompatibleJet, OrderUnavailable
from torus_forge.kam.iterate import TorusJet
from torus_forge.kam.jets import multi_indices

logger = logging.getLogger(__name__)

Beta = tuple[int, ...]

# exp(−700) ya es despreciable frente a cualquier canal
_EXP_FLOOR = 700.0
# Anillo de centros extra por lado que sólo entran en la normalización
_RING = 2


def _factorial(beta: Sequence[int]) -> float:
    return float(math.prod(math.factorial(b) for b in beta))


def _profile_exponent(rho_prime: float) -> float:
    if rho_prime <= 1:
        raise ValueError(f"ρ′={rho_prime} debe ser > 1")
    return 1.0 / (rho_prime - 1.0)


# ------------------------------------------------------------------
# Perfiles Gevrey
# ------------------------------------------------------------------

def gevrey_bump(t: np.ndarray, rho_prime: float) -> np.ndarray:
    """b(t) = exp(−(1−t²)^{−1/(ρ′−1)}) en |t| < 1, cero fuera."""
    a = _profile_exponent(rho_prime)
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-((1.0 - t[inside] ** 2) ** -a))
    return out


def _half_profile(s: np.ndarray, a: float) -> np.ndarray:
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-(s[pos] ** -a))
    return out


def smooth_step(s: np.ndarray, rho_prime: float) -> np.ndarray:
    """Escalón Gevrey: 0 para s ≤ 0, 1 para s ≥ 1."""
    a = _profile_exponent(rho_prime)
    s = np.asarray(s, dtype=float)
    left, right = _half_profile(s, a), _half_profile(1.0 - s, a)
    return left / (left + right)


# ------------------------------------------------------------------
# Aritmética de series de Taylor en una variable (coeficientes f^{(k)}/k!)
# ------------------------------------------------------------------

def _series_power(u: np.ndarray, p: float) -> np.ndarray:
    """u^p con u₀ > 0; recurrencia de Miller."""
    order = u.shape[1] - 1
    v = np.zeros_like(u)
    v[:, 0] = u[:, 0] ** p
    for k in range(1, order + 1):
        acc = np.zeros(u.shape[0])
        for j in range(1, k + 1):
            acc += ((p + 1) * j - k) * u[:, j] * v[:, k - j]
        v[:, k] = acc / (k * u[:, 0])
    return v


def _series_exp(g: np.ndarray) -> np.ndarray:
    order = g.shape[1] - 1
    w = np.zeros_like(g)
    w[:, 0] = np.exp(g[:, 0])
    for k in range(1, order + 1):
        acc = np.zeros(g.shape[0])
        for j in range(1, k + 1):
            acc += j * g[:, j] * w[:, k - j]
        w[:, k] = acc / k
    return w


def _series_divide(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    order = a.shape[1] - 1
    q = np.zeros_like(a)
    for k in range(order + 1):
        acc = a[:, k].copy()
        for j in range(1, k + 1):
            acc -= b[:, j] * q[:, k - j]
        q[:, k] = acc / b[:, 0]
    return q


def bump_series(x: np.ndarray, center: float, width: float, a: float, order: int) -> np.ndarray:
    """Coeficientes de Taylor en x de b((x − center)/width), forma (P, order+1)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros((x.shape[0], order + 1))
    t0 = (x - center) / width
    inside = np.abs(t0) < 1
    if not np.any(inside):
        return out
    u = np.zeros((int(inside.sum()), order + 1))
    u[:, 0] = 1.0 - t0[inside] ** 2
    if order >= 1:
        u[:, 1] = -2.0 * t0[inside] / width
    if order >= 2:
        u[:, 2] = -1.0 / width ** 2
    v = _series_power(u, -a)
    alive = v[:, 0] < _EXP_FLOOR
    block = np.zeros_like(u)
    if np.any(alive):
        block[alive] = _series_exp(-v[alive])
    out[inside] = block
    return out


# ------------------------------------------------------------------
# Jets
# ------------------------------------------------------------------

@dataclass
class WhitneyJet:
    """Tabla {β: valores (S, C)} sobre S ⊂ R^m con constantes (A, C₁, C₂, ρ, ρ′)."""

    points: np.ndarray
    derivatives: dict[Beta, np.ndarray]
    m_max: int
    A: float = 1.0
    C1: float = 1.0
    C2: float = 1.0
    rho: float = 2.0
    rho_prime: float = 3.0

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        S = self.points.shape[0]
        table = {}
        for beta, val in self.derivatives.items():
            val = np.asarray(val)
            table[tuple(int(b) for b in beta)] = val.reshape(S, -1)
        self.derivatives = table
        for beta in multi_indices(self.m, self.m_max):
            if beta not in self.derivatives:
                raise OrderUnavailable(sum(beta), self.m_max)

    @property
    def m(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def channels(self) -> int:
        return next(iter(self.derivatives.values())).shape[1]

    @property
    def dtype(self):
        return np.result_type(*self.derivatives.values())

    def values(self) -> np.ndarray:
        return self.derivatives[(0,) * self.m]

    def taylor(self, index: int, x: np.ndarray, delta: Beta) -> np.ndarray:
        """∂^δ T_p f(x) para p = points[index]; x de forma (P, m), salida (P, C)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        dx = x - self.points[index]
        out = np.zeros((x.shape[0], self.channels), dtype=self.dtype)
        for gamma in multi_indices(self.m, self.m_max - sum(delta)):
            beta = tuple(d + g for d, g in zip(delta, gamma))
            mono = np.prod(dx ** np.asarray(gamma), axis=1) / _factorial(gamma)
            out += mono[:, None] * self.derivatives[beta][index][None, :]
        return out

    def remainder_bound(self, beta: Beta, distance: float) -> float:
        """A·C₂^{m+1}·(m+1)!^{ρ′}·d^{m−|β|+1}/(m−|β|+1)!"""
        m = self.m_max
        k = m - sum(beta) + 1
        return (self.A * self.C2 ** (m + 1) * math.factorial(m + 1) ** self.rho_prime
                * distance ** k / math.factorial(k))

    def remainder_ratio(self, i: int, j: int) -> float:
        """max_β |f^β(p_j) − ∂^β T_{p_i}f(p_j)| / cota, con piso de redondeo."""
        distance = float(np.abs(self.points[j] - self.points[i]).max())
        if distance == 0:
            return 0.0
        scale = max(1.0, max(float(np.abs(v).max(initial=0.0)) for v in self.derivatives.values()))
        atol = 1e-12 * scale
        worst = 0.0
        for beta in multi_indices(self.m, self.m_max):
            rem = self.derivatives[beta][j] - self.taylor(i, self.points[j], beta)[0]
            excess = max(float(np.abs(rem).max(initial=0.0)) - atol, 0.0)
            worst = max(worst, excess / self.remainder_bound(beta, distance))
        return worst

    def compatibility(self, neighbors: int = 4) -> tuple[float, int, int]:
        """Peor cociente resto/cota entre cada punto y sus vecinos más cercanos."""
        if self.size < 2:
            return 0.0, 0, 0
        k = min(self.size, neighbors + 1)
        _, idx = cKDTree(self.points).query(self.points, k=k, p=np.inf)
        worst = (0.0, 0, 0)
        for i, row in enumerate(np.atleast_2d(idx)):
            for j in row[1:]:
                for a, b in ((i, int(j)), (int(j), i)):
                    ratio = self.remainder_ratio(a, b)
                    if ratio > worst[0]:
                        worst = (ratio, a, b)
        return worst

    def fit_constants(self, rho_prime: float | None = None) -> "WhitneyJet":
        """Estima C₂ y A a partir de los órdenes guardados."""
        rho_prime = self.rho_prime if rho_prime is None else rho_prime
        sup = {beta: float(np.abs(v).max(initial=0.0)) for beta, v in self.derivatives.items()}
        base = max(sup[(0,) * self.m], 1e-300)
        C2 = 1.0
        for beta, value in sup.items():
            order = sum(beta)
            if order:
                C2 = max(C2, (value / _factorial(beta) ** rho_prime / base) ** (1.0 / order))
        A = max(value / (C2 ** sum(beta) * _factorial(beta) ** rho_prime) for beta, value in sup.items())
        return WhitneyJet(self.points, dict(self.derivatives), self.m_max, A=max(A, 1e-300), C1=self.C1,
                          C2=C2, rho=self.rho, rho_prime=rho_prime)

    # -- intercambio JSON ----------------------------------------------

    def to_dict(self) -> dict:
        table = {}
        for beta, val in self.derivatives.items():
            key = ",".join(str(b) for b in beta)
            table[key] = {"re": np.real(val).tolist(), "im": np.imag(val).tolist()}
        return {
            "points": self.points.tolist(),
            "m_max": self.m_max,
            "derivatives": table,
            "constants": {"A": self.A, "C1": self.C1, "C2": self.C2,
                          "rho": self.rho, "rho_prime": self.rho_prime},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "WhitneyJet":
        table = {}
        for key, val in data["derivatives"].items():
            beta = tuple(int(b) for b in key.split(","))
            re, im = np.asarray(val["re"], dtype=float), np.asarray(val["im"], dtype=float)
            table[beta] = re + 1j * im if np.any(im) else re
        return cls(np.asarray(data["points"], dtype=float), table, int(data["m_max"]), **data["constants"])


# ------------------------------------------------------------------
# Operador de extensión
# ------------------------------------------------------------------

@dataclass
class _Axis:
    """Centros de un eje: los interiores llevan Taylor, el anillo sólo normaliza."""

    first: float
    inner: int
    width: float

    def center(self, k: int) -> float:
        return self.first + k * self.width

    def is_inner(self, k: int) -> bool:
        return 0 <= k < self.inner

    def near(self, x: float) -> list[int]:
        pos = math.floor((x - self.first) / self.width)
        ks = range(max(pos - 1, -_RING), min(pos + 2, self.inner + _RING - 1) + 1)
        return [k for k in ks if abs(x - self.center(k)) < self.width]


@dataclass
class WhitneyExtension:
    jet: WhitneyJet
    width: float
    axes: list[_Axis]
    tree: cKDTree = field(repr=False)
    _centers: dict[tuple[int, ...], int] = field(default_factory=dict, repr=False)

    @property
    def m(self) -> int:
        return self.jet.m

    def _taylor_center(self, cube: tuple[int, ...]) -> int:
        if cube not in self._centers:
            c = np.array([ax.center(k) for ax, k in zip(self.axes, cube)])
            _, idx = self.tree.query(c, p=np.inf)
            self._centers[cube] = int(idx)
        return self._centers[cube]

    def _weights(self, x: np.ndarray, order: int) -> dict[int, np.ndarray]:
        """{índice de S: tensor de Taylor de W_p en x}, W_p = Σ_{cubos con centro p} φ_q."""
        a = _profile_exponent(self.jet.rho_prime)
        per_axis: list[list[tuple[int, np.ndarray]]] = []
        all_inner = True
        for ax, xi in zip(self.axes, x):
            ks = ax.near(xi)
            series = {k: bump_series(np.array([xi]), ax.center(k), ax.width, a, order)[0] for k in ks}
            live = [k for k in ks if series[k][0] > 0]
            if any(not ax.is_inner(k) for k in live):
                all_inner = False
            total = sum(series[k] for k in ks)
            inner = [k for k in live if ax.is_inner(k)]
            if not inner:
                return {}
            per_axis.append([
                (k, _series_divide(series[k][None, :], total[None, :])[0]) for k in inner
            ])

        groups: dict[int, np.ndarray] = {}
        for combo in itertools.product(*per_axis):
            cube = tuple(k for k, _ in combo)
            p = self._taylor_center(cube)
            tensor = combo[0][1]
            for _, coeffs in combo[1:]:
                tensor = np.multiply.outer(tensor, coeffs)
            groups[p] = groups.get(p, 0.0) + tensor

        if all_inner and len(groups) == 1:
            # Partición completa con un solo centro: W ≡ 1
            (p,) = groups
            unit = np.zeros((order + 1,) * self.m)
            unit[(0,) * self.m] = 1.0
            groups[p] = unit
        return groups

    def derivatives(self, points: np.ndarray, betas: Sequence[Beta]) -> dict[Beta, np.ndarray]:
        """{β: ∂^β f̃ en cada punto}, forma (P, C)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        betas = [tuple(b) for b in betas]
        order = max((sum(b) for b in betas), default=0)
        out = {b: np.zeros((points.shape[0], self.jet.channels), dtype=self.jet.dtype) for b in betas}
        for row, x in enumerate(points):
            for p, W in self._weights(x, order).items():
                for beta in betas:
                    acc = 0.0
                    for gamma in itertools.product(*(range(b + 1) for b in beta)):
                        coeff = W[gamma]
                        if coeff == 0:
                            continue
                        rest = tuple(b - g for b, g in zip(beta, gamma))
                        if sum(rest) > self.jet.m_max:
                            continue
                        fall = _factorial(beta) / _factorial(rest)
                        acc = acc + fall * coeff * self.jet.taylor(p, x, rest)[0]
                    out[beta][row] += acc
        return out

    def derivative(self, beta: Beta, points: np.ndarray) -> np.ndarray:
        return self.derivatives(points, [tuple(beta)])[tuple(beta)]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.derivative((0,) * self.m, points)

    def growth(self, points: np.ndarray, max_order: int = 4) -> dict[int, float]:
        """max sobre la muestra de |∂^β f̃|/β!^{ρ′} por orden |β|."""
        betas = multi_indices(self.m, max_order)
        table = self.derivatives(points, betas)
        out: dict[int, float] = {}
        for beta, val in table.items():
            m = sum(beta)
            ratio = float(np.abs(val).max(initial=0.0)) / _factorial(beta) ** self.jet.rho_prime
            out[m] = max(out.get(m, 0.0), ratio)
        return out


def geometric_rate(growth: Mapping[int, float]) -> float:
    """Menor G con growth[k] ≤ growth[0]·G^k."""
    base = growth.get(0, 0.0)
    if base <= 0:
        return math.nan
    rates = [(v / base) ** (1.0 / k) for k, v in growth.items() if k > 0 and v > 0]
    return max(rates, default=0.0)


def extend_jet(
    jet: WhitneyJet,
    check: bool = True,
    width: float | None = None,
    margin: float | None = None,
) -> WhitneyExtension:
    """Extensión suave del jet a R^m; IncompatibleJet si falla la compatibilidad de Taylor."""
    if check:
        ratio, i, j = jet.compatibility()
        if ratio > 1.0:
            raise IncompatibleJet(i, j, ratio)
    tree = cKDTree(jet.points)
    if width is None:
        if jet.size > 1:
            dist, _ = tree.query(jet.points, k=2, p=np.inf)
            width = float(dist[:, 1].min()) / 4
        else:
            width = 0.25
    if width <= 0:
        raise ValueError("puntos repetidos en el jet")
    margin = 2 * width if margin is None else max(margin, width)
    axes = []
    for lo, hi in zip(jet.points.min(axis=0), jet.points.max(axis=0)):
        first = lo - margin
        inner = int(math.ceil((hi + margin - first) / width)) + 1
        axes.append(_Axis(first, inner, width))
    logger.debug(
        f"Extensión: {jet.size} puntos, ℓ={width:.3e}, "
        f"{math.prod(ax.inner for ax in axes)} cubos interiores, {jet.channels} canales"
    )
    return WhitneyExtension(jet, width, axes, tree)


# ------------------------------------------------------------------
# Reducción por pesos de Fourier
# ------------------------------------------------------------------

@dataclass
class ModeJets:
    """Jets por modo g_k = e^{r|k|^{1/ρ}} f_k; los canales del jet son los modos."""

    modes: np.ndarray
    r: float
    rho: float
    grid_size: int
    jet: WhitneyJet

    @property
    def n(self) -> int:
        return self.modes.shape[1]

    def norms(self) -> np.ndarray:
        return np.abs(self.modes).sum(axis=1).astype(float)

    def damping(self) -> np.ndarray:
        return np.exp(-self.r * self.norms() ** (1.0 / self.rho))

    def weighted_sup(self, C2: float) -> dict[int, float]:
        """max_β |g_k^β|·C₂^{−|β|}·β!^{−ρ} por |k|."""
        norms = self.norms().astype(int)
        out: dict[int, float] = {}
        for beta, val in self.jet.derivatives.items():
            scaled = np.abs(val).max(axis=0) / (C2 ** sum(beta) * _factorial(beta) ** self.rho)
            for order, v in zip(norms, scaled):
                out[int(order)] = max(out.get(int(order), 0.0), float(v))
        return dict(sorted(out.items()))


def fourier_modes(n: int, grid_size: int) -> np.ndarray:
    """Modos con |k_i| ≤ G/2, conjunto simétrico; con G par el Nyquist entra con ambos signos."""
    half = grid_size // 2
    return np.array(list(itertools.product(range(-half, half + 1), repeat=n)), dtype=int).reshape(-1, n)


def nyquist_split(modes: np.ndarray, grid_size: int) -> np.ndarray:
    """2^{−m} con m las coordenadas en ±G/2: el coeficiente de la FFT se reparte entre los signos."""
    if grid_size % 2:
        return np.ones(len(modes))
    return 0.5 ** (np.abs(modes) == grid_size // 2).sum(axis=1)


def fourier_weight(jet: WhitneyJet, n: int, grid_size: int, c0: float = 1.0) -> ModeJets:
    """Canales del jet = valores en la grilla θ (G^n, orden lexicográfico) → jets por modo."""
    shape = (grid_size,) * n
    if jet.channels != grid_size ** n:
        raise ValueError(f"{jet.channels} canales no forman una grilla {shape}")
    r = c0 * jet.C1 ** (-1.0 / jet.rho)
    modes = fourier_modes(n, grid_size)
    weight = np.exp(r * np.abs(modes).sum(axis=1) ** (1.0 / jet.rho))
    split = nyquist_split(modes, grid_size)
    index = tuple((modes % grid_size).T)
    table = {}
    for beta, val in jet.derivatives.items():
        grid = val.reshape((jet.size,) + shape)
        coeffs = np.fft.fftn(grid, axes=tuple(range(1, n + 1))) / grid_size ** n
        table[beta] = coeffs[(slice(None),) + index] * (weight * split)[None, :]
    mode_jet = WhitneyJet(jet.points, table, jet.m_max, A=jet.A, C1=jet.C1, C2=jet.C2,
                          rho=jet.rho, rho_prime=jet.rho_prime)
    logger.debug(f"Pesos de Fourier: {len(modes)} modos, r={r:.3e}")
    return ModeJets(modes, r, jet.rho, grid_size, mode_jet)


def assemble(modes: ModeJets, theta: np.ndarray, values: np.ndarray, real: bool = True) -> np.ndarray:
    """f̃(θ, ω) = Σ_k e^{i⟨k,θ⟩ − r|k|^{1/ρ}} g̃_k(ω); values (P_ω, M) → (P_ω, P_θ).

    Los modos vienen en pares ±k con g̃_{−k} = conj(g̃_k), así que la suma es
    real salvo redondeo; con real=True se devuelve la parte real.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    phase = np.exp(1j * theta @ modes.modes.T) * modes.damping()[None, :]
    out = np.atleast_2d(values) @ phase.T
    return out.real if real else out


# ------------------------------------------------------------------
# Corte en frecuencias
# ------------------------------------------------------------------

def frequency_cutoff(
    omega: np.ndarray,
    passing: Sequence[Sequence[float]],
    box: Sequence[tuple[float, float]],
    kappa: float,
    rho_prime: float = 3.0,
) -> np.ndarray:
    """h(ω): 1 a distancia ≤ κ/4 de un punto que pasa, 0 a distancia ≤ κ/2 del borde."""
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    passing = np.atleast_2d(np.asarray(passing, dtype=float))
    d_pass, _ = cKDTree(passing).query(omega, p=np.inf)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    d_box = np.minimum(omega - lo, hi - omega).min(axis=1)
    quarter = kappa / 4
    near = smooth_step((kappa / 2 - d_pass) / quarter, rho_prime)
    inside = smooth_step((d_box - kappa / 2) / quarter, rho_prime)
    return near * inside


# ------------------------------------------------------------------
# Desde el jet KAM
# ------------------------------------------------------------------

def torus_jet_samples(jet: TorusJet, component: int, part: str = "u", m_max: int = 0, **constants) -> WhitneyJet:
    """WhitneyJet de (U − θ)_i (part="u") o V_i (part="v") con canales en la grilla θ."""
    n = jet.n
    P = jet.grid_size ** n
    offset = {"u": 0, "v": P * n}[part]
    betas = multi_indices(n, m_max)
    table: dict[Beta, list[np.ndarray]] = {b: [] for b in betas}
    for index in range(len(jet.runs)):
        source = jet.derivatives[index] if jet.derivatives else {(0,) * n: jet.values(index)}
        for beta in betas:
            if beta not in source:
                raise OrderUnavailable(sum(beta), max((sum(b) for b in source), default=0))
            vec = np.real(np.asarray(source[beta]))
            table[beta].append(vec[offset:offset + P * n].reshape(P, n)[:, component])
    return WhitneyJet(np.asarray(jet.omegas), {b: np.stack(v) for b, v in table.items()}, m_max, **constants)
