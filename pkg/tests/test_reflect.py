import numpy as np
import pytest

from core.errors import DomainError
from core.geometry import Region, mass
from core.grid_field import GridField, uniform_axis
from core.reflect import (ReflectedField, SourceField, jump_indicators, odd_reflect, reflect,
                          verify_extension)

Y1 = uniform_axis(-1.0, 1.0, 33)
Y2 = uniform_axis(0.0, 1.0, 17)


def _field(func, name='v'):
    return GridField.from_function(func, Y1, Y2, name=name)


def test_odd_extension_is_exact():
    vbar = odd_reflect(_field(lambda a, b: b * np.cos(a) + b ** 2))
    assert vbar.shape == (33, 33)
    np.testing.assert_array_equal(vbar.values, -vbar.values[:, ::-1])
    assert np.all(vbar.values[:, 16] == 0.0)
    assert vbar.y[16] == 0.0
    assert vbar.mask[16, 0] and not vbar.mask[0, 0]


def test_odd_reflect_requires_bottom_edge():
    shifted = GridField.from_function(lambda a, b: b, Y1, uniform_axis(0.1, 1.0, 10))
    with pytest.raises(DomainError):
        odd_reflect(shifted)


def test_source_sample_outside_rectangle():
    f = _field(lambda a, b: a + b, name='f')
    source = SourceField(f, np.zeros(f.shape), np.zeros(f.shape))
    assert float(source.sample(0.5, 0.25)) == pytest.approx(0.75, abs=1e-12)
    with pytest.raises(DomainError):
        source.sample(0.0, -0.5)


def test_reflect_snaps_small_midline_values():
    values = _field(lambda a, b: b * np.cos(a)).values.copy()
    values[3, 0] = 1e-13
    values[5, 0] = 1e-3
    v = GridField(Y1, Y2, values, name='v')
    f = _field(lambda a, b: np.zeros_like(a), name='f')
    result = reflect(v, SourceField(f, f.values, f.values), boundary_residual=1e-12)
    assert result.snapped == 1
    assert result.unsnapped == 1
    assert result.symmetry_defect() == 0.0
    assert result.midline_defect == pytest.approx(1e-3)


def test_jump_of_second_derivative():
    # y2^2 reflects to |y2| y2
    indicators = jump_indicators(odd_reflect(_field(lambda a, b: b ** 2)))
    assert indicators['jump_d2'] == pytest.approx(4.0, rel=1e-8)


def test_smooth_extension_has_no_jumps():
    indicators = jump_indicators(odd_reflect(_field(lambda a, b: a * b ** 3 + b)))
    assert indicators['jump_d2'] < 1e-7
    assert indicators['jump_d3'] < 1e-7


def test_extension_residual_for_harmonic_field():
    v = _field(lambda a, b: b * a ** 2 - b ** 3 / 3.0)
    f = _field(lambda a, b: np.zeros_like(a), name='f')
    report = verify_extension(ReflectedField(odd_reflect(v), odd_reflect(f)))
    assert report['residual_max'] < 1e-6
    assert report['symmetry_defect'] == 0.0
    assert len(report['annuli']) == 9


def test_reflection_doubles_disc_mass():
    v = _field(lambda a, b: b * (1.0 + a ** 2) - b ** 3 / 3.0)
    vbar = odd_reflect(v)
    for rho in (0.2, 0.5, 0.8):
        full = mass(vbar, Region.disc(rho))
        half = mass(v, Region.half_disc(rho))
        assert full == pytest.approx(2.0 * half, rel=1e-9)


def _jumps(func, n):
    v = GridField.from_function(func, uniform_axis(-1.0, 1.0, n),
                                uniform_axis(0.0, 1.0, (n - 1) // 2 + 1), name='v')
    return jump_indicators(odd_reflect(v))


def test_jumps_shrink_when_laplacian_vanishes_on_edge():
    # v = 0 et Delta v = 0 sur y2 = 0: vbar est C^3
    def func(a, b):
        return b * np.cos(a) + b ** 4

    coarse, fine = _jumps(func, 33), _jumps(func, 65)
    assert fine['jump_d2'] < 0.3 * coarse['jump_d2']
    assert fine['jump_d3'] < 0.6 * coarse['jump_d3']
    assert fine['jump_d2'] == pytest.approx(44.0 / 32 ** 2, rel=1e-6)


def test_second_derivative_jump_persists_without_edge_condition():
    def func(a, b):
        return b * np.cos(a) + b ** 2

    for n in (33, 65, 129):
        assert _jumps(func, n)['jump_d2'] == pytest.approx(4.0, rel=1e-6)
