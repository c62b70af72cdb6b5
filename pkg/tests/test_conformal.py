import math

import numpy as np
import pytest

from config.settings import CHART_CONFIG
from core.conformal import (ConformalChart, bilaplacian_pullback_check, build_chart, chart_grid_shape,
                            laplacian_pullback_check, pullback, pullback_function, verify_bounds)
from core.errors import ChartError, ParameterError
from core.expressions import Expression
from core.geometry import build_domain


@pytest.fixture
def flat_chart(flat_profile):
    return build_chart(flat_profile, 33)


def test_chart_grid_shape():
    assert chart_grid_shape(33) == (33, 17)


def test_flat_chart_is_a_scaling(flat_chart):
    yy1, yy2 = flat_chart.phi.meshgrid()
    np.testing.assert_allclose(flat_chart.phi.values, 0.25 * yy1, atol=1e-15)
    np.testing.assert_allclose(flat_chart.psi.values, 0.25 * yy2, atol=1e-15)
    np.testing.assert_allclose(flat_chart.jacobian_norm, 0.25 * math.sqrt(2.0), rtol=1e-14)
    assert flat_chart.K == pytest.approx(4.0, rel=1e-12)
    assert flat_chart.c0 == pytest.approx(math.sqrt(2.0) / 2.0, rel=1e-12)


def test_flat_chart_bounds(flat_chart):
    bounds = verify_bounds(flat_chart)
    assert bounds.passed
    assert bounds.failures == []
    assert not bounds.k_above_8


def test_flat_chart_identities(flat_chart):
    identities = flat_chart.identity_residuals()
    assert identities['dtd'] < 1e-14
    assert identities['harmonic_phi'] < 1e-9
    assert identities['harmonic_psi'] < 1e-9


def test_curved_chart_follows_gamma(curved_profile):
    chart = build_chart(curved_profile, 33)
    assert chart.diagnostics['boundary_residual'] < 1e-10
    assert chart.diagnostics['origin_residual'] < 1e-12
    assert chart.diagnostics['cr_residual'] <= chart.diagnostics['cr_tolerance']
    assert np.all(chart.grad_sq > 0.0)


def test_inverse_recovers_nodes(curved_profile):
    chart = build_chart(curved_profile, 33)
    y1, y2, converged = chart.inverse(chart.phi.values[::4, ::4], chart.psi.values[::4, ::4])
    yy1, yy2 = chart.phi.meshgrid()
    assert np.all(converged)
    np.testing.assert_allclose(y1, yy1[::4, ::4], atol=1e-9)
    np.testing.assert_allclose(y2, yy2[::4, ::4], atol=1e-9)


def test_unknown_method_rejected(flat_profile):
    with pytest.raises(ParameterError):
        build_chart(flat_profile, 33, method='schwarz')


@pytest.mark.parametrize('key, label', [
    ('cr_tolerance_factor', 'Cauchy-Riemann'),
    ('boundary_tolerance', 'Bottom edge'),
    ('origin_tolerance', 'Origin offset'),
])
def test_chart_tolerances_are_enforced(monkeypatch, curved_profile, key, label):
    # tolérance négative: tout résidu mesuré la dépasse
    monkeypatch.setitem(CHART_CONFIG, key, -1.0)
    with pytest.raises(ChartError, match=label) as excinfo:
        build_chart(curved_profile, 33)
    assert excinfo.value.stage == 'flatten-chart'
    assert excinfo.value.exit_code == 3
    assert excinfo.value.residual >= 0.0


def test_save_and_load(tmp_path, curved_profile):
    chart = build_chart(curved_profile, 33)
    chart.save(tmp_path)
    loaded = ConformalChart.load(tmp_path)
    assert loaded.K == pytest.approx(chart.K)
    assert loaded.method == 'polynomial'
    np.testing.assert_array_equal(loaded.phi.values, chart.phi.values)
    np.testing.assert_allclose(loaded.grad_sq, chart.grad_sq, rtol=1e-12)


def test_pullback_of_quadratic(flat_profile, flat_chart):
    u = build_domain(flat_profile, 33).sample_function(Expression('x1^2 + x2'), 'u')
    w = pullback(u, flat_chart)
    yy1, yy2 = w.meshgrid()
    np.testing.assert_allclose(w.values, (0.25 * yy1) ** 2 + 0.25 * yy2, atol=1e-11)


def test_laplacian_transforms_conformally(curved_profile):
    chart = build_chart(curved_profile, 33)
    u = Expression('x1^2*x2 + x2^3')
    w = pullback_function(u, chart)
    assert laplacian_pullback_check(u, w, chart) < 1e-5


def test_bilaplacian_pullback_on_flat_chart(flat_chart):
    u = Expression('x1^2*x2^2')
    w = pullback_function(u, flat_chart)
    assert bilaplacian_pullback_check(u, w, flat_chart) < 1e-8
