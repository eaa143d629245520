"""
tests/test_jets.py — Tests de derivadas en ω por cuadratura de Cauchy
"""
from __future__ import annotations

import logging

import numpy as np
import pytest

from torus_forge.errors import ContourTooLarge
from torus_forge.kam.jets import jet_derivatives, multi_indices


def f(w: np.ndarray) -> np.ndarray:
    """exp(w₀)·w₁² en dos canales: el valor y su doble."""
    v = np.exp(w[0]) * w[1] ** 2
    return np.array([v, 2 * v])


def test_multi_indices_order():
    assert multi_indices(2, 2) == [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]
    assert multi_indices(3, 0) == [(0, 0, 0)]


def test_derivatives_match_closed_form():
    x, y = 0.3, 0.5
    table = jet_derivatives(f, (x, y), 2, h=0.4)
    e = np.exp(x)
    expected = {
        (0, 0): e * y**2,
        (1, 0): e * y**2,
        (0, 1): 2 * e * y,
        (2, 0): e * y**2,
        (1, 1): 2 * e * y,
        (0, 2): 2 * e,
    }
    for beta, value in expected.items():
        np.testing.assert_allclose(table[beta], [value, 2 * value], atol=1e-10)
    assert table.consistency < 1e-10
    assert table.orders() == multi_indices(2, 2)


def test_explicit_orders():
    table = jet_derivatives(f, (0.3, 0.5), [(0, 3)], h=0.4)
    assert list(table.values) == [(0, 3)]
    np.testing.assert_allclose(table[(0, 3)], 0.0, atol=1e-10)


def test_growth_by_order():
    table = jet_derivatives(f, (0.0, 1.0), 1, h=0.4)
    growth = table.growth()
    assert set(growth) == {0, 1}
    assert growth[0] == pytest.approx(2.0)
    assert growth[1] == pytest.approx(4.0, abs=1e-10)


def test_contour_too_large():
    with pytest.raises(ContourTooLarge):
        jet_derivatives(f, (0.3, 0.5), 1, h=0.4, radius=0.3)


def test_needs_enough_nodes():
    with pytest.raises(ValueError):
        jet_derivatives(f, (0.3, 0.5), 4, h=0.4, nodes=4)


def test_consistency_within_tolerance():
    table = jet_derivatives(f, (0.3, 0.5), 1, h=0.4, tolerance=1e-9)
    assert table.tolerance == 1e-9
    assert table.consistent


def test_pole_between_radii_breaks_consistency(caplog):
    """Un polo entre ρ/2 y ρ cambia la integral de Cauchy en el radio principal."""
    def g(w: np.ndarray) -> np.ndarray:
        return np.array([1.0 / (w[0] - 0.38)])

    with caplog.at_level(logging.WARNING, logger="torus_forge.kam.jets"):
        table = jet_derivatives(g, (0.3, 0.5), [(1, 0)], h=0.4)
    assert not table.consistent
    assert table.consistency > 1.0
    assert "difieren" in caplog.text
