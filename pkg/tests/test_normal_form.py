"""
tests/test_normal_form.py — Tests de estabilidad, deriva y forma normal sobre el conjunto plano
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from torus_forge.errors import ConditionViolated, NotSeparable, StepTooLarge
from torus_forge.kam.iterate import theta_grid
from torus_forge.model.presets.polynomial import quadratic
from torus_forge.normal_form.drift import YOSHIDA8, DriftTrace, SeparableHamiltonian, drift_experiment
from torus_forge.normal_form.generating import TrigInterpolant, reduce_to_family
from torus_forge.normal_form.stability import stability_bound, stability_profile
from torus_forge.series.fourier import FourierTaylor


# ------------------------------------------------------------------
# Estabilidad
# ------------------------------------------------------------------

class TestStability:
    def test_rejects_nonpositive_distance(self):
        with pytest.raises(ValueError):
            stability_bound(0.0, 0.05, 1.0, 2.0, 1.5)

    def test_profile_is_monotone(self):
        d = np.geomspace(1e-5, 1e-2, 40)
        values = [b.value for b in stability_profile(d, 0.05, 1.0, 2.0, 1.5)]
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert values[0] < 1e-6

    def test_closed_form_tracks_discrete_minimum(self):
        for b in stability_profile(np.geomspace(1e-5, 1e-2, 20), 0.05, 1.0, 2.0, 1.5):
            assert 1 / 3 <= b.ratio <= 3
            assert b.exponent_index == pytest.approx(5.0)

    def test_far_from_set_is_capped(self):
        b = stability_bound(100.0, 0.5, 1.0, 2.0, 1.5)
        assert b.m_star <= 0.5
        assert b.value == pytest.approx(0.5)

    def test_derivative_prefactor(self):
        plain = stability_bound(1e-3, 0.05, 2.0, 2.0, 1.5)
        d1 = stability_bound(1e-3, 0.05, 2.0, 2.0, 1.5, beta=(1,))
        assert d1.value / plain.value == pytest.approx(2.0 / 0.05)


# ------------------------------------------------------------------
# Integrador separable
# ------------------------------------------------------------------

@pytest.fixture
def pendulum() -> SeparableHamiltonian:
    return SeparableHamiltonian(quadratic(1), FourierTaylor.cosine((1,), 0.1))


class TestSeparable:
    def test_composition_weights(self):
        assert len(YOSHIDA8) == 15
        assert sum(YOSHIDA8) == pytest.approx(1.0, abs=1e-12)
        assert YOSHIDA8 == tuple(reversed(YOSHIDA8))

    def test_rejects_action_dependence(self):
        with pytest.raises(NotSeparable):
            SeparableHamiltonian(quadratic(1), FourierTaylor.cosine((1,), 0.1, monomial=(1,)))

    def test_energy_conserved(self, pendulum):
        x, y = np.array([[0.3]]), np.array([[1.0]])
        E0 = pendulum.energy(x, y)
        x1, y1 = pendulum.integrate(x, y, T=2.0, h=0.01)
        assert abs(pendulum.energy(x1, y1)[0] - E0[0]) / abs(E0[0]) < 1e-10
        assert not np.allclose(x1, x)

    def test_time_reversible(self, pendulum):
        x, y = np.array([[0.3]]), np.array([[1.0]])
        x1, y1 = pendulum.step(x, y, 0.05)
        x2, y2 = pendulum.step(x1, y1, -0.05)
        np.testing.assert_allclose(x2, x, atol=1e-13)
        np.testing.assert_allclose(y2, y, atol=1e-13)

    def test_potential_gradient(self, pendulum):
        x = np.array([[0.3], [1.2]])
        np.testing.assert_allclose(pendulum.potential_gradient(x), -0.1 * np.sin(x), atol=1e-15)

    def test_step_limit(self, pendulum):
        assert pendulum.step_limit(np.array([[2.0]])) == pytest.approx(0.005)
        assert pendulum.step_limit(np.array([[0.0]])) == math.inf

    def test_nothing_to_integrate(self, pendulum):
        x, y = np.array([[0.3]]), np.array([[1.0]])
        x1, y1 = pendulum.integrate(x, y, T=0.0, h=0.01)
        assert x1 is x and y1 is y


class TestDriftTrace:
    def test_onset_and_rows(self):
        trace = DriftTrace(
            times=np.array([0.0, 1.0, 2.0]),
            drift=np.array([[0.0, 0.0], [1e-9, 0.0], [1e-6, 2e-9]]),
            energy_error=np.zeros((3, 2)),
            starts=np.zeros((2, 2)),
            step=0.01,
        )
        assert trace.max_drift == 1e-6
        assert trace.onset_time(1e-8) == 2.0
        assert trace.onset_time(1e-8, start=1) == math.inf
        rows = trace.rows()
        assert len(rows) == 6
        assert rows[-1] == {"time": 2.0, "start": 1, "drift": 2e-9, "energy_error": 0.0}


# ------------------------------------------------------------------
# Reducción e interpolación
# ------------------------------------------------------------------

class TestReduction:
    def test_eps_from_perturbation(self):
        H1 = FourierTaylor.cosine((1,), 2.5e-8)
        red = reduce_to_family(quadratic(1), H1, 0.05, [(1.0,)])
        assert red.eps_H == pytest.approx(1e-5)
        assert red.r == pytest.approx(0.05 * math.sqrt(1e-5))
        assert red.R == red.r
        assert not red.degenerate

    def test_eps_above_threshold(self):
        H1 = FourierTaylor.cosine((1,), 1e-3)
        with pytest.raises(ConditionViolated) as info:
            reduce_to_family(quadratic(1), H1, 0.05, [(1.0,)])
        assert info.value.which == "eps_H"


class TestTrigInterpolant:
    def test_values_and_gradient(self):
        G = 8
        theta = theta_grid(2, G)
        values = np.stack([np.cos(theta[:, 0]), np.sin(theta[:, 0] - theta[:, 1])], axis=1)
        interp = TrigInterpolant(values, 2, G)
        points = np.array([[0.3, 1.1], [2.0, -0.4]])
        expected = np.stack([np.cos(points[:, 0]), np.sin(points[:, 0] - points[:, 1])], axis=1)
        np.testing.assert_allclose(interp(points), expected, atol=1e-12)
        grad = interp.gradient(points)
        assert grad.shape == (2, 2, 2)
        np.testing.assert_allclose(grad[:, 0, 0], -np.sin(points[:, 0]), atol=1e-12)
        np.testing.assert_allclose(grad[:, 1, 1], -np.cos(points[:, 0] - points[:, 1]), atol=1e-12)


# ------------------------------------------------------------------
# Forma normal del experimento de regresión
# ------------------------------------------------------------------

class TestNormalForm:
    def test_flat_set(self, pipeline):
        result, _ = pipeline
        nf = result.normal_form
        assert nf.flat_set.shape == (3, 1)
        np.testing.assert_allclose(nf.flat_set[:, 0], [0.9, 1.0, 1.1], atol=1e-6)
        assert nf.degeneracy < 1

    def test_chi_roundtrip(self, pipeline):
        nf = pipeline[0].normal_form
        phi = np.array([[0.0], [1.3], [4.0]])
        J = nf.flat_set[1]
        image = nf.chi(phi, J)
        back = nf.chi_inverse(image)
        np.testing.assert_allclose(back[:, :1], phi, atol=1e-9)
        np.testing.assert_allclose(back[:, 1:], np.broadcast_to(J, (3, 1)), atol=1e-9)

    def test_chi_is_symplectic(self, pipeline):
        nf = pipeline[0].normal_form
        assert nf.symplecticity(samples=10) < 1e-8

    def test_generating_function(self, pipeline):
        nf = pipeline[0].normal_form
        data = nf.data
        x = np.array([[0.5]])
        J = data.actions[0]
        expected = x @ J + data.Q(x, data.samples[0])
        np.testing.assert_allclose(data.generating(x, J), expected, atol=1e-12)

    def test_line_potential_is_periodic(self, pipeline):
        data = pipeline[0].normal_form.data
        assert data.period_defect(1) < 1e-11
        x = np.array([[0.3], [2.0], [5.0]])
        np.testing.assert_allclose(data.q_periodized(x, 1), data.q_tilde(x, 1), rtol=0, atol=1e-11)

    def test_line_integral_paths_agree(self, pipeline):
        data = pipeline[0].normal_form.data
        x = np.array([[1.7], [4.2]])
        np.testing.assert_allclose(data.psi_line(x, 0), data.psi_line(x, 0, path="axis"), atol=1e-12)
        with pytest.raises(ValueError):
            data.psi_line(x, 0, path="espiral")

    def test_short_drift(self, pipeline):
        nf = pipeline[0].normal_form
        start = np.concatenate([np.zeros(1), nf.flat_set[1]])[None, :]
        trace = drift_experiment(nf, start, T_max=2.0, records=2)
        assert trace.drift.shape == (3, 1)
        assert trace.max_drift < 1e-7
        assert trace.max_energy_error < 1e-10

    def test_flatness_on_grid(self, pipeline):
        flat_R, flat_dR = pipeline[0].normal_form.flatness()
        assert flat_R <= 1e-6
        assert flat_dR <= 1e-6

    def test_long_drift_on_torus(self, pipeline):
        """T = 10⁴ desde el toro central: J se mueve ≤ 1e−7 y la energía ≤ 1e−10."""
        nf = pipeline[0].normal_form
        start = np.concatenate([np.zeros(1), nf.flat_set[1]])[None, :]
        trace = drift_experiment(nf, start, T_max=1e4, records=2)
        assert trace.max_drift <= 1e-7
        assert trace.max_energy_error <= 1e-10

    def test_step_too_large(self, pipeline):
        nf = pipeline[0].normal_form
        start = np.concatenate([np.zeros(1), nf.flat_set[0]])[None, :]
        with pytest.raises(StepTooLarge):
            drift_experiment(nf, start, T_max=1.0, h=1.0)
