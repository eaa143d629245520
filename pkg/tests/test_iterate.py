"""
tests/test_iterate.py — Tests de la iteración por frecuencia y de su verificación
"""
from __future__ import annotations

import numpy as np
import pytest

from torus_forge.kam.iterate import (
    IterateSettings,
    ProjectedFamily,
    TorusJet,
    differentiate,
    iterate,
    iterate_frequency,
    step_params,
    theta_grid,
    verify_run,
)
from torus_forge.kam.schedule import ANALYTIC, GEVREY, ScheduleParams, build_schedule


@pytest.fixture(scope="module")
def schedule():
    return build_schedule(ScheduleParams(rho=2.0, tau=1.5, n=2, kappa=0.01, r0=1e-3,
                                         mode=ANALYTIC, tau_prime=3.0))


@pytest.fixture
def settings() -> IterateSettings:
    return IterateSettings(kappa=0.01, tau=1.5, mode=ANALYTIC, K_cap=12, j_max=8)


@pytest.fixture
def run(forced_rotator, schedule, golden, settings):
    return iterate_frequency(forced_rotator, schedule, golden, settings)


class TestIterateFrequency:
    def test_converges(self, run, settings):
        assert run.residuals[0] == pytest.approx(2e-4, rel=1e-9)
        assert run.residuals[-1] <= settings.tol
        assert 1 <= run.levels <= settings.j_max
        assert len(run.reports) == run.levels
        assert len(run.template_log_ratios) == len(run.residuals)

    def test_residuals_decrease(self, run):
        assert all(b < a for a, b in zip(run.residuals, run.residuals[1:]))

    def test_verification(self, run):
        verify_run(run, grid=64, invariance_points=2, T=5.0, samples=20)
        assert run.conjugacy <= 1e-9
        assert run.invariance < 1e-7
        assert run.symplectic < 1e-9

    def test_complex_frequency_cannot_be_verified(self, forced_rotator, schedule, golden, settings):
        omega = golden.astype(complex) + 1e-3j
        run = iterate_frequency(forced_rotator, schedule, omega, settings)
        assert np.iscomplexobj(run.omega)
        with pytest.raises(ValueError):
            verify_run(run)

    def test_jet_values_layout(self, run):
        theta = theta_grid(2, 4)
        values = run.jet_values(theta)
        # (U − θ, V) en 16 puntos más φ − ω
        assert values.shape == (2 * 2 * 16 + 2,)

    def test_needs_more_than_one_level(self, run):
        # 2·10⁻⁴ al cuadrado sigue sobre tol: un solo paso no alcanza
        assert run.levels >= 2

    def test_contraction_exponent(self, run):
        p = run.contraction_exponent()
        assert 1.5 <= p <= 2.2
        exponents = run.level_exponents()
        assert exponents[0] == pytest.approx(2.0, abs=0.2)
        assert all(e >= 1.5 for e in exponents)

    def test_quadratic_family_has_no_truncation(self, run):
        verify_run(run, grid=16, invariance_points=0, samples=10)
        assert run.expansion is not None
        assert run.truncation <= 1e-15


class TestGevreyMode:
    """La misma familia con aproximantes analíticos P_j por nivel."""

    @pytest.fixture(scope="class")
    def gevrey_schedule(self):
        return build_schedule(ScheduleParams(rho=2.0, tau=1.5, n=2, kappa=0.01, r0=1e-3, mode=GEVREY))

    @pytest.fixture
    def gevrey_run(self, forced_rotator, gevrey_schedule, golden):
        settings = IterateSettings(kappa=0.01, tau=1.5, mode=GEVREY, K_cap=12, j_max=8)
        return iterate_frequency(forced_rotator, gevrey_schedule, golden, settings)

    def test_converges(self, gevrey_run):
        assert gevrey_run.residuals[-1] <= 1e-11
        assert gevrey_run.levels >= 2

    def test_conjugacy(self, gevrey_run):
        verify_run(gevrey_run, grid=64, invariance_points=0, samples=20)
        assert gevrey_run.conjugacy <= 1e-9
        assert gevrey_run.symplectic < 1e-9

    def test_contraction_exponent(self, gevrey_run):
        assert gevrey_run.contraction_exponent() >= 1.5


class TestStepParamsFromSchedule:
    def test_cap_and_floors(self, schedule, settings):
        params = step_params(schedule, 3, settings)
        assert params.K == 12
        assert 0 < params.eta <= 1
        assert params.r > 0
        assert params.sigma == pytest.approx(float(schedule.sigma_j[3]))

    def test_index_clamped(self, schedule, settings):
        last = step_params(schedule, schedule.levels - 1, settings)
        beyond = step_params(schedule, schedule.levels + 5, settings)
        assert beyond == last


class TestProjectedFamily:
    def test_only_perturbation_changes(self, forced_rotator, golden):
        projected = ProjectedFamily(forced_rotator, u=0.2, L1=1.0, rho=2.0)
        base_rest = forced_rotator.member(golden) - forced_rotator.perturbation(golden)
        proj_rest = projected.member(golden) - projected.perturbation(golden)
        assert (base_rest - proj_rest).l1() < 1e-15
        np.testing.assert_allclose(projected.frequency_model(golden), forced_rotator.frequency_model(golden))


class TestSettings:
    def test_rejects_mode(self):
        with pytest.raises(ValueError):
            IterateSettings(kappa=0.01, tau=1.5, mode="otro")

    def test_rejects_caps(self):
        with pytest.raises(ValueError):
            IterateSettings(kappa=0.01, tau=1.5, K_cap=0)


class TestDifferentiate:
    def test_first_order_jet(self, run, forced_rotator, schedule, settings):
        jet = differentiate(TorusJet([run], 4), forced_rotator, schedule, settings, order=1, nodes=4)
        table = jet.derivatives[0]
        assert set(table) == {(0, 0), (0, 1), (1, 0)}
        size = 2 * 2 * 16 + 2
        assert all(v.shape == (size,) for v in table.values())
        np.testing.assert_array_equal(table[(0, 0)], jet.values(0))
        # ∂(φ − ω)/∂ω ≈ 0 con H⁰ cuadrático
        np.testing.assert_allclose(table[(1, 0)][-2:], 0.0, atol=1e-6)
        assert len(jet.consistency) == 1
        assert np.isfinite(jet.consistency[0])

    def test_torus_jet_accessors(self, run):
        jet = TorusJet([run], 4)
        assert jet.n == 2
        assert jet.theta().shape == (16, 2)
        assert jet.omegas == [tuple(float(w) for w in run.omega)]
        assert jet.history() == [run.residuals]


def test_absolute_embedding(pipeline):
    """En la familia del experimento el toro se traslada a z₀(ξ)."""
    run = pipeline[0].jet.runs[1]
    assert run.z0 is not None
    theta = theta_grid(1, 8)
    centered = run.embedding(theta).real
    image = run.absolute_embedding(theta)
    np.testing.assert_allclose(image[:, :1], centered[:, :1])
    np.testing.assert_allclose(image[:, 1] - centered[:, 1], np.real(run.z0[0]), rtol=0, atol=1e-12)
    assert np.abs(image[:, 1] - np.real(run.z0[0])).max() < 1e-6


def test_iterate_over_grid(forced_rotator, schedule, settings, golden):
    jet = iterate(forced_rotator, schedule, [golden], settings, grid_size=4, order=0)
    assert jet.omegas == [tuple(float(w) for w in golden)]
    assert jet.derivatives == []
    assert jet.runs[0].conjugacy < 1e-8
    assert jet.values(0).shape == (2 * 2 * 16 + 2,)
