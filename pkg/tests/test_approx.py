"""
tests/test_approx.py — Tests de extensiones casi analíticas y proyección de Cauchy–Green
"""
from __future__ import annotations

import numpy as np
import pytest

from torus_forge.approx.extension import (
    CallableFunction,
    ComplexGridFunction,
    ExtensionSpec,
    THETA,
    TrigFunction,
    almost_analytic_extend,
    cauchy_riemann_residual,
    dbar_defect,
    truncation_order,
)
from torus_forge.approx.green import (
    Rectangle,
    approx_sequence,
    centered_strips,
    fit_rate,
    green_project,
    periodic_kernel,
    periodic_kernel_series,
    project_series,
    projection_multiplier,
)
from torus_forge.errors import OrderUnavailable, QuadratureFailure
from torus_forge.series.fourier import FourierTaylor


# ------------------------------------------------------------------
# Extensión
# ------------------------------------------------------------------

class TestExtension:
    def test_truncation_order(self):
        assert truncation_order(1.0, 0.25, 2.0) == 3

    def test_truncation_needs_gevrey(self):
        with pytest.raises(ValueError):
            truncation_order(1.0, 0.25, 1.0)

    def test_spec_defaults(self):
        spec = ExtensionSpec(u=0.1, L1=2.0, rho=2.0)
        assert spec.v == pytest.approx(0.1)
        assert spec.chain_ok()
        assert spec.N1 == spec.N2 == spec.N3

    def test_real_axis_is_exact(self):
        P = TrigFunction.gevrey_model(20)
        x = np.linspace(0, 2 * np.pi, 17)
        F = almost_analytic_extend(P, ExtensionSpec(u=0.1, L1=1.0, rho=2.0), [x])
        np.testing.assert_array_equal(F(x[:, None]), P(x[:, None]))

    def test_analytic_function_extends_to_itself(self):
        P = TrigFunction(FourierTaylor.cosine((1,)))
        F = almost_analytic_extend(P, ExtensionSpec(u=0.05, L1=1.0, rho=2.0), [np.array([0.0])])
        z = np.array([[1.0 + 0.1j], [2.0 - 0.05j]])
        np.testing.assert_allclose(F(z), np.cos(z[:, 0]), atol=1e-12)

    def test_dbar_formula_matches_cauchy_riemann(self):
        P = TrigFunction(FourierTaylor.cosine((1,)))
        spec = ExtensionSpec(u=0.4, L1=1.0, rho=2.0)
        assert spec.N1 == 2
        F = almost_analytic_extend(P, spec, [np.array([0.0])])
        z = np.array([[1.0 + 0.8j]])
        exact = dbar_defect(F, 0, z)
        assert exact > 0.1
        assert cauchy_riemann_residual(F, 0, z) == pytest.approx(exact, rel=1e-6)

    def test_real_slice(self):
        P = TrigFunction.gevrey_model(20)
        x = np.linspace(0, 2 * np.pi, 9)
        F = almost_analytic_extend(P, ExtensionSpec(u=0.1, L1=1.0, rho=2.0), [x])
        assert F.values.shape == (27,)
        np.testing.assert_allclose(F.real_slice(), P(x[:, None]), atol=1e-14)

    def test_real_slice_needs_zero_offset(self):
        P = TrigFunction.gevrey_model(5)
        spec = ExtensionSpec(u=0.1, L1=1.0, rho=2.0)
        F = almost_analytic_extend(P, spec, [np.zeros(2)], imag_offsets=[np.array([0.1])])
        with pytest.raises(ValueError):
            F.real_slice()

    def test_defect_exponent(self):
        # (3/4)(ρ−1)(2L₁u)^{−1/(ρ−1)} con 2L₁u = 1/2
        assert ExtensionSpec(u=0.125, L1=2.0, rho=2.0).defect_exponent() == pytest.approx(1.5)

    def test_order_unavailable(self):
        P = CallableFunction(lambda alpha, x: np.zeros(len(x)), kinds=(THETA,), max_order=2)
        with pytest.raises(OrderUnavailable):
            almost_analytic_extend(P, ExtensionSpec(u=0.1, L1=1.0, rho=2.0), [np.zeros(1)])

    def test_trig_function_rejects_actions(self):
        with pytest.raises(ValueError):
            TrigFunction(FourierTaylor.action(1, 0))


# ------------------------------------------------------------------
# Núcleo y proyección
# ------------------------------------------------------------------

class TestProjection:
    def test_kernel_series_limit(self):
        w = 0.7 + 0.2j
        assert periodic_kernel_series(w) == pytest.approx(periodic_kernel(w), rel=1e-8)

    def test_multiplier_limits(self):
        lam = projection_multiplier(np.array([0, 1, 400]), 0.1, 5)
        assert lam[0] == pytest.approx(1.0)
        assert 0 < lam[1] < 1
        assert lam[2] < 1e-12

    def test_quadrature_matches_multipliers(self):
        """Extender + proyectar cos 3θ por cuadratura = multiplicador λ₃ exacto."""
        series = FourierTaylor.cosine((3,))
        u = 0.1
        result = approx_sequence(TrigFunction(series), [u], L1=1.0, rho=2.0, nodes=2048)
        points = np.linspace(0, 2 * np.pi, 96, endpoint=False)[:, None]
        expected = project_series(series, u, 1.0, 2.0).evaluate(points)
        np.testing.assert_allclose(result.approximants[0](points), expected, atol=1e-9)

    def test_errors_decrease_with_strip(self):
        P = TrigFunction.gevrey_model(60)
        result = approx_sequence(P, [0.2, 0.14, 0.098], L1=1.0, rho=2.0, nodes=2048)
        errors = [lv.err_sup for lv in result.levels]
        assert errors[0] > errors[1] > errors[2]
        assert result.rate_slope < 0
        assert result.header() == ["j", "u_j", "err_sup", "err_d1", "dbar_defect"]
        assert len(result.rows()) == 3


class TestRate:
    def test_centered_strips_step_orders(self):
        strips = centered_strips(3, 5, L1=1.0, rho=2.0)
        np.testing.assert_allclose(strips, [1 / 5, 1 / 7, 1 / 9, 1 / 11, 1 / 13])
        assert [ExtensionSpec(u=u, L1=1.0, rho=2.0).N1 for u in strips] == [3, 4, 5, 6, 7]

    def test_centered_strips_need_positive_order(self):
        with pytest.raises(ValueError):
            centered_strips(0, 3, L1=1.0, rho=2.0)

    def test_gevrey_rate_over_five_levels(self):
        """log|P − P_j| afín en 1/u_j para el modelo G² de 40 modos."""
        P = TrigFunction.gevrey_model(40)
        result = approx_sequence(P, centered_strips(3, 5, L1=1.0, rho=2.0), L1=1.0, rho=2.0, nodes=2048)
        errors = [lv.err_sup for lv in result.levels]
        assert all(a > b for a, b in zip(errors, errors[1:]))
        assert result.rate_slope < 0
        assert result.rate_r2 >= 0.98

    def test_constant_is_fixed(self):
        P = TrigFunction(FourierTaylor.constant(1, 2.5))
        result = approx_sequence(P, [0.2, 0.1], L1=1.0, rho=2.0, nodes=2048)
        for lv in result.levels:
            assert lv.err_sup <= 1e-12
            assert lv.err_d1 <= 1e-10
            assert lv.dbar_defect == 0.0

    def test_dbar_defect_slope(self):
        """Pendiente de log ∂̄-defecto contra 1/u por debajo de −(3/4)·½·0.85."""
        P = TrigFunction.gevrey_model(40)
        strips = [0.2, 0.09, 0.045]
        result = approx_sequence(P, strips, L1=1.0, rho=2.0, nodes=2048)
        defects = [lv.dbar_defect for lv in result.levels]
        slope, _ = fit_rate([1 / u for u in strips], defects)
        assert slope <= -0.375 * 0.85

    def test_projection_satisfies_cauchy_riemann(self):
        P = TrigFunction.gevrey_model(60)
        spec = ExtensionSpec(u=0.2, L1=1.0, rho=2.0)
        x = np.linspace(0, 2 * np.pi, 96, endpoint=False)
        z = (x + 0.1j)[:, None]
        F = almost_analytic_extend(P, spec, [x])
        assert dbar_defect(F, 0, z) > 1e-3

        projected = approx_sequence(P, [0.2], L1=1.0, rho=2.0, nodes=2048).approximants[0]
        scale = float(np.abs(P(x[:, None])).max())
        assert cauchy_riemann_residual(projected, 0, z) <= 1e-8 * scale


class TestRectangle:
    def test_reproduces_entire_function(self):
        axes, offsets = [np.linspace(-0.5, 0.5, 5)], [np.array([0.0, 0.2, -0.2])]
        F = ComplexGridFunction.sample(lambda z: np.exp(z[:, 0]), axes, offsets)
        G = green_project(F, 0, Rectangle(half_length=1.0, half_width=0.5))
        z = ComplexGridFunction.grid_points(axes, offsets)
        np.testing.assert_allclose(G(z), np.exp(z[:, 0]), atol=1e-10)
        np.testing.assert_allclose(G.derivative(z, 0), np.exp(z[:, 0]), atol=1e-10)
        assert 0 in G.analytic_axes

    def test_conjugate_picks_up_area_term(self):
        """Para z̄ la proyección vale ζ̄ + (1/π)∬_D dA/(η − ζ) (∂̄z̄ = 1)."""
        a, b = 1.0, 0.5
        zeta = 0.3 + 0.1j
        F = ComplexGridFunction.sample(lambda z: np.conj(z[:, 0]), [np.array([0.3])], [np.array([0.0, 0.1])])
        G = green_project(F, 0, Rectangle(half_length=a, half_width=b))

        # ∫ dx/(x + iy − ζ) = Log(a − ζ + iy) − Log(−a − ζ + iy); la rama salta en y = Im ζ
        nodes, weights = np.polynomial.legendre.leggauss(64)
        area = 0j
        for lo, hi in [(-b, zeta.imag), (zeta.imag, b)]:
            y = (hi + lo) / 2 + (hi - lo) / 2 * nodes
            inner = np.log(a - zeta + 1j * y) - np.log(-a - zeta + 1j * y)
            area += (hi - lo) / 2 * np.sum(weights * inner)
        expected = np.conj(zeta) + area / np.pi
        assert abs(G(np.array([[zeta]]))[0] - expected) <= 1e-10

    def test_points_outside_fail(self):
        F = ComplexGridFunction.sample(lambda z: z[:, 0], [np.array([0.0])], [np.array([0.0])])
        G = green_project(F, 0, Rectangle(half_length=1.0, half_width=0.5))
        with pytest.raises(QuadratureFailure):
            G(np.array([[2.0 + 0.0j]]))
