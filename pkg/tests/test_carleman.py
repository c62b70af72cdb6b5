import math

import numpy as np
import pytest

from core.carleman import (CSV_COLUMNS, CarlemanCell, TestFunctionSpec, _tau_stable, bump,
                           cutoff_test_function, evaluate_estimate, make_family,
                           make_test_function, phi, smooth_step, sweep, weight)
from core.errors import NumericalStageError, ParameterError
from core.grid_field import GridField, uniform_axis
from core.reports import read_csv

RESOLUTION = 65


@pytest.fixture(scope='module')
def bump_function():
    return make_test_function(TestFunctionSpec(0.3, 0.9, seed=7, resolution=RESOLUTION))


def test_weight_values():
    assert float(phi(0.15)) == pytest.approx(0.0779384, abs=1e-7)
    assert float(phi(1.0)) == pytest.approx(0.25)
    assert float(weight(0.6, 0.8)) == pytest.approx(0.25)
    s = np.linspace(0.01, 1.0, 50)
    assert np.all(np.diff(phi(s)) > 0)


def test_cutoff_helpers():
    assert float(bump(0.0)) == pytest.approx(math.exp(-1.0))
    assert float(bump(1.0)) == 0.0
    np.testing.assert_allclose(smooth_step(np.array([-0.5, 0.0, 0.5, 1.0, 2.0])),
                               [0.0, 0.0, 0.5, 1.0, 1.0])


def test_spec_validation():
    with pytest.raises(ParameterError):
        TestFunctionSpec(0.5, 0.4)
    with pytest.raises(ParameterError):
        TestFunctionSpec(0.2, 0.8, profile='gaussian')


def test_test_function_support(bump_function):
    xx, yy = bump_function.grid.meshgrid()
    radius = np.hypot(xx, yy)
    outside = (radius <= 0.3) | (radius >= 0.9)
    assert np.all(bump_function.grid.values[outside] == 0.0)
    assert np.any(bump_function.grid.values != 0.0)


def test_family_is_seeded():
    family = make_family(0.3, 0.9, 3, base_seed=10, resolution=RESOLUTION)
    assert [U.seed for U in family] == [10, 11, 12]
    again = make_family(0.3, 0.9, 1, base_seed=11, resolution=RESOLUTION)[0]
    np.testing.assert_array_equal(again.grid.values, family[1].grid.values)


def test_ratio_is_positive(bump_function):
    cell = evaluate_estimate(bump_function, 5.0, 0.4)
    assert cell.flag == 'ok'
    assert cell.ratio > 0.0
    assert cell.lhs == pytest.approx(cell.lhs_group1 + cell.lhs_group2)
    assert cell.log_lhs == pytest.approx(math.log(cell.lhs), abs=1e-9)


def test_ratio_is_scale_invariant(bump_function):
    c1 = evaluate_estimate(bump_function, 10.0, 0.8)
    c2 = evaluate_estimate(bump_function.scaled(2.0), 10.0, 0.8)
    assert c2.ratio == pytest.approx(c1.ratio, rel=1e-10)
    assert c2.rhs == pytest.approx(4.0 * c1.rhs, rel=1e-10)


def test_null_function_is_undefined():
    U = make_test_function(TestFunctionSpec(0.3, 0.9, profile='null', resolution=RESOLUTION))
    cell = evaluate_estimate(U, 2.0, 0.4)
    assert cell.flag == 'undefined'
    assert math.isnan(cell.ratio)


def test_parameter_checks(bump_function):
    with pytest.raises(ParameterError):
        evaluate_estimate(bump_function, 0.5, 0.4)
    with pytest.raises(ParameterError):
        evaluate_estimate(bump_function, 2.0, 2.0)
    with pytest.raises(ParameterError):
        sweep([])


def test_sweep_maximum(tmp_path, bump_function):
    result = sweep([bump_function], taus=[2, 5], radii=[0.4])
    assert len(result.cells) == 2
    assert result.C_emp == max(c.ratio for c in result.cells)
    assert result.argmax['function_id'] == bump_function.function_id
    assert result.summary()['flags'] == {'ok': 2, 'undefined': 0, 'non_finite': 0}
    assert result.seeds == [7]

    rows = read_csv(result.write_csv(tmp_path / 'carleman.csv'))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [row['tau'] for row in rows] == [2.0, 5.0]


def test_tau_stabilisation():
    def cell(tau, ratio):
        return CarlemanCell('u', tau, 0.4, 1.0, 1.0, 1.0, ratio, 0.0, 0.0)

    cells = [cell(2.0, 1.0), cell(5.0, 1.2), cell(10.0, 1.21), cell(20.0, 1.215)]
    assert _tau_stable(cells, [2, 5, 10, 20]) == 5.0
    cells[-1] = cell(20.0, 2.0)
    assert _tau_stable(cells, [2, 5, 10, 20]) is None


def test_cutoff_of_reflected_field():
    axis = uniform_axis(-1.0, 1.0, 33)
    vbar = GridField.from_function(lambda a, b: b * (1.0 + a ** 2), axis, axis, name='vbar')
    U = cutoff_test_function(vbar, 0.3, 0.9)
    xx, yy = U.grid.meshgrid()
    radius = np.hypot(xx, yy)
    assert np.all(U.grid.values[(radius <= 0.3) | (radius >= 0.9)] == 0.0)
    with pytest.raises(ParameterError):
        cutoff_test_function(vbar, 0.6, 0.4)
    skewed = GridField.from_function(lambda a, b: b, axis, uniform_axis(-1.0, 1.0, 17))
    with pytest.raises(ParameterError):
        cutoff_test_function(skewed, 0.3, 0.9)


def test_weight_ratio_bounds():
    s = np.linspace(1e-6, 1.0, 20001)
    ratio = phi(s) / s
    assert np.all(ratio >= 0.25) and np.all(ratio < 1.0)
    assert np.all(ratio[:-1] > 0.25)
    assert ratio[-1] == pytest.approx(0.25, rel=1e-15)


def test_first_group_scales_with_radius(bump_function):
    near = evaluate_estimate(bump_function, 10.0, 0.4)
    far = evaluate_estimate(bump_function, 10.0, 0.8)
    assert math.sqrt(far.lhs_group1) == pytest.approx(2.0 * math.sqrt(near.lhs_group1), rel=1e-12)
    assert far.lhs_group2 == near.lhs_group2
    assert far.rhs == near.rhs


def test_larger_family_cannot_lower_the_constant():
    family = make_family(0.3, 0.9, 3, base_seed=20, resolution=RESOLUTION)
    smaller = sweep(family[:2], taus=[2, 5], radii=[0.4])
    larger = sweep(family, taus=[2, 5], radii=[0.4])
    assert larger.C_emp >= smaller.C_emp
    assert len(larger.cells) == 3 * len(smaller.cells) // 2


def test_sweep_without_defined_ratio_fails():
    U = make_test_function(TestFunctionSpec(0.3, 0.9, profile='null', resolution=RESOLUTION))
    with pytest.raises(NumericalStageError, match='not finite') as excinfo:
        sweep([U], taus=[2, 5], radii=[0.4])
    assert excinfo.value.stage == 'carleman-sweep'
    assert excinfo.value.exit_code == 3
