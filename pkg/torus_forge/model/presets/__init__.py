"""
torus_forge/model/presets — Partes integrables H⁰ disponibles

Presets:
- quadratic  : |I|²/2 (+ acople I_iI_j opcional)
- anharmonic : Σ I_i²/2 + b·I_i³/6
- polynomial : coeficientes explícitos {exponente: coeficiente}
"""
from __future__ import annotations

from typing import Any

from torus_forge.model.presets.base import GevreyData, IntegrableHamiltonian


def get_preset(name: str, n: int, **params: Any) -> IntegrableHamiltonian:
    """
    Retorna una instancia del preset pedido.

    params se pasan tal cual al constructor (coupling, cubic, box, terms).
    """
    preset = name.lower()

    if preset == "quadratic":
        from torus_forge.model.presets.polynomial import quadratic
        return quadratic(n, **params)

    if preset == "anharmonic":
        from torus_forge.model.presets.polynomial import anharmonic
        return anharmonic(n, **params)

    if preset == "polynomial":
        from torus_forge.model.presets.polynomial import PolynomialHamiltonian
        terms = params.pop("terms")
        box = params.pop("box", [(-3.0, 3.0)] * n)
        return PolynomialHamiltonian(n, terms, box, **params)

    raise ValueError(f"preset desconocido: {name}")


__all__ = ["GevreyData", "IntegrableHamiltonian", "get_preset"]
