"""
tests/test_step.py — Tests de un paso KAM, series de Lie y transformaciones del toro
"""
from __future__ import annotations

import numpy as np
import pytest

from torus_forge.errors import ConditionViolated, SeriesNotConverged
from torus_forge.kam.step import (
    StepParams,
    TorusTransform,
    kam_step,
    lie_series,
    normal_form_residual,
    step_conditions,
    symplectic_defect,
    symplectic_form,
)
from torus_forge.model.family import linear_series, quadratic_series
from torus_forge.series.fourier import FourierTaylor


@pytest.fixture
def params() -> StepParams:
    return StepParams(sigma=0.1, eta=0.5, K=6, r=0.01, s=0.05, h=0.1)


def random_points(n: int, count: int = 12, seed: int = 3) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.concatenate([rng.uniform(0, 2 * np.pi, (count, n)),
                           rng.uniform(-1e-3, 1e-3, (count, n))], axis=1)


# ------------------------------------------------------------------
# Series de Lie
# ------------------------------------------------------------------

class TestLieSeries:
    def test_action_under_cosine_generator(self):
        """I∘Φ_F con F = cos θ es I + sin θ (la serie se corta en m = 1)."""
        G = FourierTaylor.action(1, 0)
        F = FourierTaylor.cosine((1,), 1.0)
        out = lie_series(G, F, K_rep=2)
        theta = np.linspace(0, 2 * np.pi, 7)[:, None]
        actions = np.full_like(theta, 0.3)
        np.testing.assert_allclose(out.evaluate(theta, actions), 0.3 + np.sin(theta[:, 0]), atol=1e-14)

    def test_zero_generator_is_identity(self):
        G = FourierTaylor.cosine((1, 2), 0.7)
        out = lie_series(G, FourierTaylor.zeros(2), K_rep=4)
        assert (out - G).l1() == 0.0


# ------------------------------------------------------------------
# Transformaciones
# ------------------------------------------------------------------

class TestTorusTransform:
    def test_identity(self, golden):
        T = TorusTransform.identity(2, golden)
        pts = random_points(2)
        np.testing.assert_allclose(T(pts), pts, atol=1e-15)
        jac = T.jacobian(pts)
        np.testing.assert_allclose(jac, np.broadcast_to(np.eye(4), jac.shape), atol=1e-15)
        assert T.deformation(0.1, 0.01, 0.1) == 0.0

    def test_symplectic_form(self):
        J = symplectic_form(2)
        np.testing.assert_array_equal(J @ J, -np.eye(4))
        assert symplectic_defect(np.broadcast_to(np.eye(4), (3, 4, 4))) == 0.0

    def test_step_transform_is_symplectic(self, forced_rotator, golden, params):
        result = kam_step(forced_rotator.member(golden), golden, params, family=forced_rotator, xi=golden)
        jac = result.transform.jacobian(random_points(2))
        assert symplectic_defect(jac) < 1e-10


# ------------------------------------------------------------------
# Paso
# ------------------------------------------------------------------

class TestKamStep:
    def test_residual_drops(self, forced_rotator, golden, params):
        H = forced_rotator.member(golden)
        assert normal_form_residual(H, golden) == pytest.approx(2e-4, rel=1e-12)
        result = kam_step(H, golden, params, family=forced_rotator, xi=golden)
        report = result.report
        assert report.residual_before == pytest.approx(2e-4, rel=1e-9)
        assert report.residual_after < 2e-6
        assert report.K == 6
        assert len(report.row()) == len(report.header())

    def test_without_family_keeps_xi(self, forced_rotator, golden, params):
        result = kam_step(forced_rotator.member(golden), golden, params)
        np.testing.assert_array_equal(result.xi, golden)
        assert result.report.phi_shift == 0.0

    def test_strict_raises(self, forced_rotator, golden):
        tight = StepParams(sigma=0.1, eta=0.5, K=6, r=1e-8, s=0.05, h=0.1, strict=True)
        with pytest.raises(ConditionViolated) as info:
            kam_step(forced_rotator.member(golden), golden, tight, family=forced_rotator, xi=golden)
        assert info.value.exit_code == 2

    def test_lenient_records_flags(self, forced_rotator, golden):
        loose = StepParams(sigma=0.1, eta=0.5, K=6, r=1e-8, s=0.05, h=0.1)
        result = kam_step(forced_rotator.member(golden), golden, loose, family=forced_rotator, xi=golden)
        assert result.report.flags["a"] is False
        assert result.report.flags["b"] is False

    def test_conditions_limits(self, params):
        cond = step_conditions(1e-9, params)
        assert set(cond) == {"a", "b", "c"}
        assert cond["b"][1] == pytest.approx(2.0**-6 / 54 * 0.1 * 0.01)
        assert cond["c"] == (0.1, pytest.approx(1.0 / (2 * 6**2)))


class TestStepParams:
    def test_next_domain(self, params):
        assert params.s_next == 0.0
        assert params.r_next == pytest.approx(0.005)
        assert params.h_next == pytest.approx(0.4 / 9)
        assert params.k_rep == 12

    @pytest.mark.parametrize("overrides", [
        dict(K=0), dict(sigma=0.0), dict(r=0.0), dict(h=-1.0), dict(eta=0.0), dict(eta=1.5),
    ])
    def test_rejects(self, overrides):
        values = dict(sigma=0.1, eta=0.5, K=6, r=0.01, s=0.05)
        values.update(overrides)
        with pytest.raises(ValueError):
            StepParams(**values)


# ------------------------------------------------------------------
# Escala en ε y forma de la transformación
# ------------------------------------------------------------------

def forced(omega, P: FourierTaylor, twist: bool = True) -> FourierTaylor:
    """⟨ω, I⟩ (+ ½|I|² con twist) + P, sin familia."""
    N = linear_series(2, omega)
    if twist:
        N = N + quadratic_series(2, np.eye(2))
    return N + P


@pytest.fixture
def small_params() -> StepParams:
    return StepParams(sigma=0.1, eta=0.5, K=6, r=1e-3, s=0.05, h=0.1)


class TestStepScaling:
    def test_new_perturbation_is_quadratic_in_eps(self, golden, small_params):
        """Cada vez que ε se divide por 2, |P₊| cae al menos 3.5 veces."""
        p_plus = []
        for j in range(4):
            eps = 8e-4 / 2**j
            H = forced(golden, FourierTaylor.cosine((1, 0), eps))
            p_plus.append(kam_step(H, golden, small_params).report.p_plus)
        assert all(v > 0 for v in p_plus)
        assert all(a / b >= 3.5 for a, b in zip(p_plus, p_plus[1:]))

    def test_zero_perturbation_is_identity_step(self, golden, small_params):
        result = kam_step(forced(golden, FourierTaylor.zeros(2)), golden, small_params)
        pts = random_points(2)
        np.testing.assert_array_equal(result.transform(pts), pts)
        assert result.report.residual_after == 0.0
        assert result.report.p_plus == 0.0
        assert result.report.deformation == 0.0

    def test_only_actions_move(self, golden, small_params):
        """P = ε cos θ₁ sin torsión: F = ε sin θ₁/ω₁ y sólo V₁ cambia."""
        eps = 1e-4
        H = forced(golden, FourierTaylor.cosine((1, 0), eps), twist=False)
        T = kam_step(H, golden, small_params).transform
        pts = random_points(2)
        image = T(pts)
        np.testing.assert_allclose(image[:, [0, 1, 3]], pts[:, [0, 1, 3]], rtol=0, atol=1e-15)
        expected = pts[:, 2] - eps * np.cos(pts[:, 0]) / golden[0]
        np.testing.assert_allclose(image[:, 2], expected, rtol=0, atol=10 * eps**2)


SHAPES = {
    "cos": lambda eps: FourierTaylor.cosine((1, 0), eps),
    "mixed": lambda eps: FourierTaylor.cosine((1, 0), eps) + FourierTaylor.sine((1, -2), eps / 2),
}


class TestDeformationBound:
    """|W(Φ − id)| ≤ C·ε/(κ r σ^{τ+1}) en 10 casos, con C constante por forma."""

    @pytest.fixture(scope="class")
    def ratios(self) -> dict[str, list[float]]:
        omega = np.array([1.0, (np.sqrt(5) - 1) / 2])
        params = StepParams(sigma=0.1, eta=0.5, K=6, r=1e-3, s=0.05, h=0.1)
        out = {}
        for name, shape in SHAPES.items():
            out[name] = [
                kam_step(forced(omega, shape(eps)), omega, params).report.deformation_ratio
                for eps in np.geomspace(1e-7, 1e-5, 5)
            ]
        return out

    def test_bound_holds(self, ratios):
        assert all(0 < r <= 1.0 for values in ratios.values() for r in values)

    @pytest.mark.parametrize("shape", sorted(SHAPES))
    def test_constant_per_shape(self, ratios, shape):
        values = ratios[shape]
        assert max(values) / min(values) == pytest.approx(1.0, rel=1e-2)


def test_lie_series_reports_missing_cutoff():
    """ad_F^m cos θ con F = 3I nunca se anula: 3^m/m! supera la cola permitida."""
    G = FourierTaylor.cosine((1,))
    F = FourierTaylor.action(1, 0) * 3.0
    with pytest.raises(SeriesNotConverged) as info:
        lie_series(G, F, K_rep=2, max_terms=5)
    assert info.value.terms == 5
    assert info.value.tail > 0
    assert info.value.exit_code == 3
