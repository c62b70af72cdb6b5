import numpy as np
import pytest

from core.errors import MaterialError
from core.grid_field import uniform_axis
from core.material import (LameField, PlateConstants, check_strong_convexity,
                           derive_plate_constants, expanded_coefficients, stiffness_tensor)

AXIS = uniform_axis(-1.0, 1.0, 17)


@pytest.mark.parametrize('lam, mu, h, nu, E, B', [
    (1.0, 1.0, 1.0, 0.25, 2.5, 2.0 / 9.0),
    (0.0, 1.0, 1.0, 0.0, 2.0, 1.0 / 6.0),
    (1.0, 2.0, 0.1, 1.0 / 6.0, 14.0 / 3.0, 4e-4),
])
def test_plate_constants_closed_forms(lam, mu, h, nu, E, B):
    pc = derive_plate_constants(LameField.constant(lam, mu, h))
    np.testing.assert_allclose(pc.nu.values, nu, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(pc.E.values, E, rtol=1e-12)
    np.testing.assert_allclose(pc.B.values, B, rtol=1e-12)


def test_dual_bending_stiffness_on_random_pairs(rng):
    for _ in range(100):
        mu = rng.uniform(0.5, 5.0)
        lam = rng.uniform(-2.0 * mu / 3.0 + 0.1, 5.0)
        h = rng.uniform(0.01, 1.0)
        pc = derive_plate_constants(LameField.constant(lam, mu, h, n=5))
        assert np.all(pc.B.values > 0)
        assert np.all((pc.nu.values > -1.0) & (pc.nu.values < 0.5))


def test_convexity_margins():
    lame = LameField.constant(1.0, 1.0, 1.0, alpha0=0.5, gamma0=1.0, Lambda0=10.0)
    diagnostic = check_strong_convexity(lame)
    assert diagnostic.passed
    assert diagnostic.margins[:2] == pytest.approx((0.5, 4.0))


def test_convexity_failure_on_small_mu():
    lame = LameField.constant(1.0, 0.1, 1.0, alpha0=0.5, gamma0=1.0, Lambda0=10.0)
    diagnostic = check_strong_convexity(lame)
    assert not diagnostic.checks['mu_lower_bound'].passed
    assert diagnostic.first_failure().name == 'mu_lower_bound'


def test_mu_plus_lambda_consequence():
    lame = LameField.constant(-0.5, 1.0, 1.0, alpha0=0.5, gamma0=0.4, Lambda0=10.0)
    diagnostic = check_strong_convexity(lame)
    assert diagnostic.convexity_passed
    assert diagnostic.checks['mu_plus_lambda'].margin == pytest.approx(0.5 - 0.2)


def test_derive_rejects_convexity_violation():
    lame = LameField.constant(-2.0, 1.0, 0.1, alpha0=0.5, gamma0=0.5, Lambda0=100.0)
    with pytest.raises(MaterialError, match='two_mu_three_lambda'):
        derive_plate_constants(lame)


def test_stiffness_components():
    pc = derive_plate_constants(LameField.constant(1.0, 1.0, 1.0))
    c = stiffness_tensor(pc)
    B = 2.0 / 9.0
    np.testing.assert_allclose(c(0, 0, 0, 0), B)
    np.testing.assert_allclose(c(0, 0, 1, 1), 1.0 / 18.0)
    np.testing.assert_allclose(c(0, 1, 0, 1), 1.0 / 6.0)
    np.testing.assert_allclose(c(0, 1, 1, 0), 0.0)
    full = c.tensor()
    np.testing.assert_array_equal(full, np.transpose(full, (2, 3, 0, 1) + tuple(range(4, full.ndim))))


def test_contraction_with_mixed_hessian(rng):
    for _ in range(10):
        B, nu = rng.uniform(0.1, 2.0), rng.uniform(-0.9, 0.45)
        pc = PlateConstants.from_expressions(str(float(B)), str(float(nu)), AXIS[:5], AXIS[:5])
        c = stiffness_tensor(pc)
        hessian = np.zeros((2, 2) + pc.B.shape)
        hessian[0, 1] = hessian[1, 0] = 1.0        # u = x1 x2
        moments = c.contract(hessian)
        np.testing.assert_allclose(moments[0, 1], B * (1.0 - nu), rtol=1e-12)
        np.testing.assert_allclose(moments[0, 0], 0.0, atol=1e-15)


def test_constant_coefficients_reduce_to_bilaplacian(plate_constants):
    coefficients = expanded_coefficients(plate_constants)
    np.testing.assert_allclose(coefficients.a_tilde, 0.0, atol=1e-12)
    for values in coefficients.q2.values():
        np.testing.assert_allclose(values, 0.0, atol=1e-12)
    assert np.isfinite(coefficients.L)


def test_a_tilde_exponential_stiffness():
    pc = PlateConstants.from_expressions('exp(x)', '0.25', AXIS, AXIS)
    coefficients = expanded_coefficients(pc)
    np.testing.assert_allclose(coefficients.a_tilde[0], 2.0, rtol=1e-12)
    np.testing.assert_allclose(coefficients.a_tilde[1], 0.0, atol=1e-12)


def test_a_tilde_quadratic_stiffness():
    pc = PlateConstants.from_expressions('2/9 + 0.1*x^2', '0.25', AXIS, AXIS)
    a = expanded_coefficients(pc).sample_a_tilde(0.5, 0.0)
    assert float(a[0]) == pytest.approx(2.0 * 0.1 / (2.0 / 9.0 + 0.025), rel=1e-12)
    assert float(a[0]) == pytest.approx(0.808989, abs=1e-6)


def test_q2_readings():
    # d22 B = 0: both readings agree on the 11 and 12 coefficients
    pc = PlateConstants.from_expressions('1 + 0.1*x^2*y', '0.3', AXIS, AXIS)
    literal = expanded_coefficients(pc, 'literal')
    exact = expanded_coefficients(pc, 'exact')
    for key in ('11', '12'):
        np.testing.assert_allclose(literal.q2[key], exact.q2[key], atol=1e-12)
    assert literal.reading == 'literal' and exact.reading == 'exact'
    with pytest.raises(MaterialError):
        expanded_coefficients(pc, 'other')


def test_degenerate_stiffness_rejected():
    pc = PlateConstants.from_expressions('x^2', '0.25', AXIS, AXIS)
    with pytest.raises(MaterialError):
        expanded_coefficients(pc)
