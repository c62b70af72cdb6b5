import numpy as np
import pytest

from core.conformal import build_chart, pullback_function
from core.expressions import Expression
from core.flatten import (FlattenedOperator, TwistData, assemble_flattened_operator,
                          boundary_residuals_flattened, gamma_coefficient, to_v, twist_remainders)
from core.grid_field import uniform_axis
from core.material import PlateConstants
from core.reflect import compute_source

AXIS = uniform_axis(-1.0, 1.0, 33)


@pytest.fixture
def flat_setting(flat_profile):
    chart = build_chart(flat_profile, 33)
    pc = PlateConstants.from_expressions('1', '0.25', AXIS, AXIS)
    return chart, pc


def test_flat_chart_has_no_twist(flat_setting):
    chart, pc = flat_setting
    twist = gamma_coefficient(chart, pc)
    np.testing.assert_allclose(twist.gamma, 0.0, atol=1e-12)
    np.testing.assert_allclose(twist.a.values, 1.0, atol=1e-12)

    w = pullback_function(Expression('x2*cos(x1)'), chart)
    np.testing.assert_allclose(to_v(w, twist).values, w.values, atol=1e-12)


def test_trivial_twist():
    twist = TwistData.from_gamma(0.0, AXIS, uniform_axis(0.0, 1.0, 17))
    assert twist.is_trivial
    assert np.all(twist.a.values == 1.0)


def test_twist_factor():
    y2 = uniform_axis(0.0, 1.0, 17)
    twist = TwistData.from_gamma(0.4, AXIS, y2)
    assert not twist.is_trivial
    np.testing.assert_allclose(twist.a.values[5], np.exp(-0.2 * y2), rtol=1e-14)


def test_flat_operator_is_the_bilaplacian(flat_setting):
    chart, pc = flat_setting
    op = assemble_flattened_operator(chart, pc)
    assert op.coefficient_bounds()['b'] < 1e-10
    yy1, yy2 = chart.phi.meshgrid()
    np.testing.assert_allclose(op.apply(yy1 ** 2 * yy2 ** 2), 8.0, rtol=1e-6)
    for values in op.q2_coefficients().values():
        np.testing.assert_allclose(values[4:-4, 4:-4], 0.0, atol=1e-6)


def test_leading_part_with_constant_drift():
    y1, y2 = AXIS, uniform_axis(0.0, 1.0, 17)
    op = FlattenedOperator.from_coefficients([1.0, 0.0], y1, y2)
    yy1, yy2 = np.meshgrid(y1, y2, indexing='ij')
    # Delta^2 = 0, d1 Delta = 6 y2
    np.testing.assert_allclose(op.leading(yy1 ** 3 * yy2), 6.0 * yy2, atol=1e-8)


def test_twist_remainders_vanish_for_constant_factor():
    y1, y2 = AXIS, uniform_axis(0.0, 1.0, 17)
    yy1, yy2 = np.meshgrid(y1, y2, indexing='ij')
    rem = twist_remainders(yy1 ** 2 * yy2 ** 2, np.full_like(yy1, 2.0),
                           y1[1] - y1[0], y2[1] - y2[0])
    np.testing.assert_allclose(rem['bilaplacian'], 0.0, atol=1e-7)
    np.testing.assert_allclose(rem['grad_laplacian'], 0.0, atol=1e-8)


def test_boundary_residuals_after_flattening(flat_setting):
    chart, pc = flat_setting
    op = assemble_flattened_operator(chart, pc)
    twist = gamma_coefficient(chart, pc)
    w = pullback_function(Expression('x2*x1 + x2^3'), chart)
    report = boundary_residuals_flattened(w, to_v(w, twist), twist, op)
    assert report['w_edge'] < 1e-14
    assert report['v_edge'] < 1e-12
    assert report['oblique_condition'] < 1e-9
    assert report['edge_equivalence'] < 1e-9


def test_flat_source_vanishes(flat_setting):
    chart, pc = flat_setting
    op = assemble_flattened_operator(chart, pc)
    twist = gamma_coefficient(chart, pc)
    v = to_v(pullback_function(Expression('x1^2*x2^2 + x2'), chart), twist)
    source = compute_source(v, twist, op)
    np.testing.assert_allclose(source.f.values[4:-4, 4:-4], 0.0, atol=1e-4)
    assert source.f.shape == v.shape
