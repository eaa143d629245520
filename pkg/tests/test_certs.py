"""
tests/test_certs.py — Tests de certificados Gevrey, composición, mayorante e inversión
"""
from __future__ import annotations

import math

import numpy as np
import numpy.polynomial.polynomial as P
import pytest
from scipy import signal

from torus_forge.certs.gevrey import (
    GevreyCertificate,
    compose_cert,
    compose_cert_joint,
    majorant_solution,
    minimal_h_constant,
    sampled_norm,
)
from torus_forge.certs.inversion import invert_near_identity
from torus_forge.errors import (
    ContractionViolated,
    ExponentMismatch,
    MaxIterations,
    SmallnessViolated,
)


def _unit(**kw) -> GevreyCertificate:
    params = dict(amplitude=1.0, h1=1.0, h2=1.0, rho=1.0, rho_prime=1.0, n=1)
    params.update(kw)
    return GevreyCertificate(**params)


# ------------------------------------------------------------------
# Certificados
# ------------------------------------------------------------------

class TestCertificate:
    def test_bound(self):
        cert = GevreyCertificate(amplitude=2.0, h1=0.5, h2=0.25, rho=1.0, rho_prime=2.0, eps=0.5)
        assert cert.bound((1, 1), (2,)) == pytest.approx(0.25 * 0.0625 * 4)

    def test_exponents_ordered(self):
        with pytest.raises(ExponentMismatch):
            GevreyCertificate(amplitude=1.0, h1=1.0, h2=1.0, rho=2.0, rho_prime=1.0)

    def test_violations_listed(self):
        cert = _unit()
        samples = {((1,), (0,)): 10.0, ((0,), (0,)): 0.5}
        bad = cert.violations(samples)
        assert len(bad) == 1
        assert bad[0][0] == ((1,), (0,))
        assert not cert.dominates(samples)

    def test_sampled_norm_is_tightest(self):
        samples = {((1,), (0,)): 3.0, ((2,), (0,)): 4.0}
        value = sampled_norm(samples, h1=1.0, h2=1.0, rho=1.0, rho_prime=1.0)
        assert value == pytest.approx(3.0)
        cert = _unit(amplitude=value)
        assert cert.dominates(samples)


class TestComposition:
    def test_joint_unit_case(self):
        """n = 1, ρ = 1, todos los datos unitarios: B = 8, C = 9."""
        cert = compose_cert_joint(_unit(), _unit())
        assert cert.h1 == pytest.approx(8.0)
        assert cert.h2 == pytest.approx(9.0)
        assert cert.chain["rule"] == "joint"

    def test_param_unit_case(self):
        cert = compose_cert(_unit(), _unit())
        assert cert.h2 == pytest.approx(4.0)
        assert cert.amplitude == 1.0

    def test_param_exponent_mismatch(self):
        with pytest.raises(ExponentMismatch):
            compose_cert(_unit(), _unit(rho_prime=2.0))

    def test_joint_exponent_mismatch(self):
        with pytest.raises(ExponentMismatch):
            compose_cert_joint(_unit(rho=2.0, rho_prime=2.0), _unit())


class TestMajorant:
    def test_h_constant_analytic(self):
        assert minimal_h_constant(1.0) == pytest.approx(1.0)

    def test_h_constant_gevrey(self):
        assert minimal_h_constant(2.0) >= 1.0

    def test_smallness(self):
        with pytest.raises(SmallnessViolated):
            majorant_solution(0.6, 1.0)

    def test_leading_coefficients(self):
        """V ≈ εA t²/(1 − s) a orden dos: v^{2,0} = v^{2,1} = 2εA."""
        table = majorant_solution(0.1, 1.0)
        assert table.coefficient(2, 0) == pytest.approx(0.2)
        assert table.coefficient(2, 1) == pytest.approx(0.2)
        assert table.coefficient(1, 0) == 0.0

    def test_rows_start_at_order_two(self):
        rows = majorant_solution(0.1, 1.0, max_order=3).rows()
        assert rows[0][:2] == [2, 0]
        assert len(rows) == 2 * 4


# ------------------------------------------------------------------
# Inversión
# ------------------------------------------------------------------

class TestInversion:
    def test_inverts_sine_perturbation(self):
        res = invert_near_identity(lambda u: -0.1 * np.sin(u), 1.0)
        u = float(res.point)
        assert u + 0.1 * math.sin(u) == pytest.approx(1.0, abs=1e-11)
        assert res.residual <= 1e-12

    def test_vector_input(self):
        F = lambda u: 0.05 * np.array([np.cos(u[1]), np.sin(u[0])])
        res = invert_near_identity(F, np.array([0.3, 0.2]))
        np.testing.assert_allclose(res.point - F(res.point), [0.3, 0.2], atol=1e-11)

    def test_gate_rejects_large_map(self):
        with pytest.raises(ContractionViolated) as exc:
            invert_near_identity(lambda u: -0.5 * np.sin(u), 1.0)
        assert exc.value.what == "|F|"

    def test_upsilon_range(self):
        with pytest.raises(ValueError):
            invert_near_identity(lambda u: 0.0 * u, 1.0, upsilon=0.2)

    def test_max_iterations(self):
        with pytest.raises(MaxIterations) as exc:
            invert_near_identity(lambda u: 2 * u, 1.0, check=False, max_iter=5)
        assert exc.value.iterations == 5


# ------------------------------------------------------------------
# Casos borde y dominancia contra derivadas exactas
# ------------------------------------------------------------------

def _polynomial_sups(c: np.ndarray, x_half: float, w_half: float, a_max: int, b_max: int) -> dict:
    """max|∂_x^a ∂_ω^b p| sobre [−x_half, x_half] × [−w_half, w_half]; c[i, j] multiplica x^i ω^j."""
    x, w = np.meshgrid(np.linspace(-x_half, x_half, 41), np.linspace(-w_half, w_half, 41))
    out = {}
    for a in range(a_max + 1):
        for b in range(b_max + 1):
            d = P.polyder(P.polyder(c, a, axis=0), b, axis=1)
            out[((a,), (b,))] = float(np.abs(P.polyval2d(x, w, d)).max())
    return out


def _cube(c: np.ndarray) -> np.ndarray:
    return signal.convolve2d(signal.convolve2d(c, c), c) / 6


class TestCompositionEdges:
    def test_param_exponent_enters_factor(self):
        """μ = 2: 2^{1+2}·1²·1·1 = 8."""
        cert = compose_cert(_unit(rho_prime=2.0), _unit())
        assert cert.h2 == pytest.approx(8.0)
        assert cert.chain["mu"] == 2.0

    def test_param_with_zero_inner_amplitude(self):
        assert compose_cert(_unit(), _unit(eps=0.0)).h2 == pytest.approx(4.0)
        assert compose_cert(_unit(), _unit(amplitude=3.0)).h2 == pytest.approx(12.0)

    def test_joint_with_zero_inner_amplitude(self):
        cert = compose_cert_joint(_unit(eps=0.0), _unit(h1=5.0))
        assert cert.chain["A1"] == 0.0
        assert cert.h1 == pytest.approx(8.0)
        assert cert.h2 == pytest.approx(9.0)

    def test_zero_eps_bound(self):
        cert = GevreyCertificate(amplitude=3.0, h1=2.0, h2=2.0, rho=1.5, rho_prime=2.0, eps=0.0)
        assert cert.norm == 0.0
        assert cert.bound((3,), (2,)) == 0.0
        assert cert.dominates({((1,), (0,)): 0.0})

    def test_param_rule_dominates_cubic(self):
        """F(x, ω) = f(x, g(ω)) con f = (x + y)³/6 y g = ω³/10."""
        f = _cube(np.array([[0.0, 1.0], [1.0, 0.0]]))
        f_cert = GevreyCertificate(amplitude=1.0, h1=2.0, h2=2.0, rho=1.0, rho_prime=1.0)
        assert f_cert.dominates(_polynomial_sups(f, 1.0, 0.1, 3, 3))

        g = np.zeros((1, 4))
        g[0, 3] = 0.1
        g_cert = GevreyCertificate(amplitude=0.1, h1=1.0, h2=3.0, rho=1.0, rho_prime=1.0)
        assert g_cert.dominates(_polynomial_sups(g, 1.0, 1.0, 0, 4))

        inner = np.zeros((2, 4))
        inner[1, 0] = 1.0
        inner[0, 3] = 0.1
        F = _cube(inner)
        cert = compose_cert(f_cert, g_cert)
        assert cert.h2 == pytest.approx(12.0)
        assert cert.dominates(_polynomial_sups(F, 1.0, 1.0, 3, 9))

    def test_joint_rule_dominates_cubic(self):
        """F(x, ω) = f(g(x, ω), ω) con g = x + x²ω/20 y f = (y + ω)³/6."""
        g = np.zeros((3, 2))
        g[1, 0] = 1.0
        g[2, 1] = 0.05
        g_cert = GevreyCertificate(amplitude=1.1, h1=1.0, h2=1.0, rho=1.0, rho_prime=1.0)
        assert g_cert.dominates(_polynomial_sups(g, 1.0, 1.0, 3, 2))

        f = _cube(np.array([[0.0, 1.0], [1.0, 0.0]]))
        f_cert = GevreyCertificate(amplitude=1.5, h1=2.0, h2=2.0, rho=1.0, rho_prime=1.0)
        assert f_cert.dominates(_polynomial_sups(f, 1.05, 1.0, 3, 3))

        inner = g.copy()
        inner[0, 1] += 1.0
        F = _cube(inner)
        cert = compose_cert_joint(g_cert, f_cert)
        assert cert.h1 == pytest.approx(17.6)
        assert cert.h2 == pytest.approx(19.6)
        assert cert.dominates(_polynomial_sups(F, 1.0, 1.0, 6, 6))


# Derivadas cerradas sobre [−1, 1] con su certificado analítico (A, h)
ANALYTIC_CORPUS = [
    ("exp", lambda q, x: np.exp(x), math.e, 1.0),
    ("exp2", lambda q, x: 2.0**q * np.exp(2 * x), math.e**2, 2.0),
    ("sin", lambda q, x: np.sin(x + q * np.pi / 2), 1.0, 1.0),
    ("cos3", lambda q, x: 3.0**q * np.cos(3 * x + q * np.pi / 2), 1.0, 3.0),
    ("pole2", lambda q, x: math.factorial(q) / (2 - x) ** (q + 1), 2.0, 1.0),
    ("pole3", lambda q, x: (-1) ** q * math.factorial(q) / (3 + x) ** (q + 1), 1.5, 0.5),
    ("log", lambda q, x: np.log(2 + x) if q == 0 else (-1) ** (q - 1) * math.factorial(q - 1) / (2 + x) ** q, 2.0, 1.0),
    ("cosh", lambda q, x: np.cosh(x) if q % 2 == 0 else np.sinh(x), math.cosh(1.0), 1.0),
    ("xexp", lambda q, x: (x + q) * np.exp(x), 2 * math.e, 1.0),
    ("damped", lambda q, x: np.imag((-1 + 1j) ** q * np.exp((-1 + 1j) * x)), math.e, math.sqrt(2)),
]


@pytest.mark.parametrize("name,derivative,amplitude,h", ANALYTIC_CORPUS, ids=[c[0] for c in ANALYTIC_CORPUS])
def test_analytic_certificate_dominates(name, derivative, amplitude, h):
    x = np.linspace(-1.0, 1.0, 201)
    samples = {((q,), (0,)): float(np.abs(derivative(q, x)).max()) for q in range(11)}
    cert = GevreyCertificate(amplitude=amplitude, h1=h, h2=1.0, rho=1.0, rho_prime=1.0)
    assert cert.dominates(samples)
    assert sampled_norm(samples, h, 1.0, 1.0, 1.0) <= amplitude * (1 + 1e-12)


class TestMajorantDominance:
    def test_zero_amplitude(self):
        table = majorant_solution(0.0, 1.0)
        assert not table.values.any()

    def test_positive_from_order_two(self):
        values = majorant_solution(0.1, 1.0).values
        assert (values[2:, :] > 0).all()
        assert not values[:2, :].any()

    def test_dominates_quadratic_inverse(self):
        """u − u²/10 = t se invierte con coeficientes de Catalan C_{p−1}/10^{p−1}."""
        table = majorant_solution(0.1, 1.0, max_order=8)
        for p in range(2, 9):
            catalan = math.comb(2 * (p - 1), p - 1) / p
            exact = math.factorial(p) * catalan * 0.1 ** (p - 1)
            assert exact <= table.coefficient(p, 0) * (1 + 1e-12)
        assert table.coefficient(2, 0) == pytest.approx(0.2)


def test_inversion_of_zero_map():
    res = invert_near_identity(lambda u: 0.0 * u, 0.7)
    assert res.iterations == 1
    assert res.point == 0.7
    assert res.residual == 0.0
