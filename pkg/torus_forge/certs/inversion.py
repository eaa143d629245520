"""
torus_forge/certs/inversion.py — Inversión de mapas cercanos a la identidad

Para f = id − F con F chica, resuelve f(u) = w iterando
u₀ = w, u_{k+1} = F(u_k) + w. Antes de iterar verifica por muestreo que
|F| ≤ υh y |DF| ≤ 1/4 en la bola de radio (1−4υ)h alrededor de w.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from torus_forge.errors import ContractionViolated, MaxIterations

logger = logging.getLogger(__name__)

MapEvaluator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class InversionResult:
    point: np.ndarray
    iterations: int
    residual: float


def _sup(x: np.ndarray) -> float:
    return float(np.max(np.abs(x), initial=0.0))


def _jacobian(F: MapEvaluator, x: np.ndarray, step: float) -> np.ndarray:
    d = x.shape[0]
    cols = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        cols.append((np.asarray(F(x + e)) - np.asarray(F(x - e))) / (2 * step))
    return np.stack(cols, axis=1)


def contraction_gate(F: MapEvaluator, w: np.ndarray, h: float, upsilon: float) -> tuple[float, float]:
    """Muestrea |F| y |DF| (norma fila) en el centro y en ±(1−4υ)h e_i."""
    d = w.shape[0]
    radius = (1 - 4 * upsilon) * h
    samples = [w]
    for i in range(d):
        e = np.zeros(d)
        e[i] = radius
        samples.extend([w + e, w - e])
    step = 1e-6 * max(1.0, _sup(w.real))
    size = max(_sup(np.asarray(F(x))) for x in samples)
    slope = max(float(np.abs(_jacobian(F, x, step)).sum(axis=1).max()) for x in samples)
    return size, slope


def invert_near_identity(
    F: MapEvaluator,
    w,
    h: float = 1.0,
    upsilon: float = 1 / 8,
    tol: float = 1e-12,
    max_iter: int = 200,
    check: bool = True,
) -> InversionResult:
    """Retorna u con |u − F(u) − w| ≤ tol."""
    if not 0 < upsilon < 1 / 6:
        raise ValueError(f"υ={upsilon} debe estar en (0, 1/6)")
    scalar = np.ndim(w) == 0
    w = np.atleast_1d(np.asarray(w))
    G = (lambda x: np.atleast_1d(F(x[0]))) if scalar else F

    if check:
        size, slope = contraction_gate(G, w, h, upsilon)
        if size > upsilon * h:
            raise ContractionViolated("|F|", size, upsilon * h)
        if slope > 0.25:
            raise ContractionViolated("|DF|", slope, 0.25)

    u = w
    for it in range(1, max_iter + 1):
        nxt = np.asarray(G(u)) + w
        delta = _sup(nxt - u)
        u = nxt
        if delta <= tol:
            logger.debug(f"Inversión convergió en {it} iteraciones (Δ={delta:.2e})")
            point = u[0] if scalar else u
            return InversionResult(point=point, iterations=it, residual=delta)
    raise MaxIterations(max_iter, delta)
