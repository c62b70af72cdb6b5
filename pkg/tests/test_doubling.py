import math

import numpy as np
import pytest

from core.doubling import (CSV_COLUMNS, QuasiDoublingCheck, check_doubling_form,
                           fit_doubling_constants, frequency, measure_masses,
                           optimize_tau_to_doubling, quasi_doubling_check)
from core.errors import ParameterError
from core.expressions import Expression
from core.geometry import build_domain
from core.reports import read_csv

RADII = (0.05, 0.2, 0.8)
TAUS = [2, 5, 10, 20, 50]


def half_disc_mass(rho):
    # v = y2
    return math.pi * rho ** 4 / 8.0


@pytest.fixture
def linear_check():
    return QuasiDoublingCheck.from_masses(RADII, half_disc_mass, TAUS, C=10.0)


@pytest.fixture
def flat_report(flat_profile):
    chart = build_domain(flat_profile, 33)
    return measure_masses(Expression('x2'), chart, (0.0, 0.0), [0.05, 0.1, 0.2, 0.4], C=4.0)


def test_feasibility_frontier(linear_check):
    c_min = linear_check.c_min()
    assert c_min[0] == pytest.approx(0.4 / 272.0, rel=1e-12)
    assert c_min[-1] * 64.0 ** 50 == pytest.approx(3.2, rel=1e-6)
    assert linear_check.any_feasible
    assert linear_check.feasible() == [True] * len(TAUS)
    assert all(s > 0.0 for s in linear_check.slack())


def test_quasi_check_from_field():
    q = quasi_doubling_check(Expression('x2'), RADII, TAUS, C=10.0)
    assert q.masses['r_bar0'] == pytest.approx(half_disc_mass(0.8), rel=1e-10)
    assert q.c_min()[0] == pytest.approx(0.4 / 272.0, rel=1e-8)


def test_doubling_statement(linear_check):
    statement = optimize_tau_to_doubling(linear_check, 256.0)
    assert statement.emitted
    assert statement.tau_balance == pytest.approx(1.6)
    assert statement.tau == 5.0
    assert statement.constant == pytest.approx(16.0 + 256.0 * 4.0 ** -5)
    assert statement.exponent == pytest.approx(math.log2(16.25))
    assert statement.C == pytest.approx(linear_check.c_min()[1])
    assert statement.C * 256.0 ** statement.k == pytest.approx(statement.constant, rel=1e-12)
    assert [row['tau'] for row in statement.table] == [float(t) for t in TAUS]


def test_equal_masses_pick_first_balanced_tau():
    masses = {'2r': 1.0, 'r_bar': 1.0, 'r': 1.0, 'r_bar0': 1.0}
    q = QuasiDoublingCheck.from_masses(RADII, masses, [5, 10, 20, 50], C=10.0)
    statement = optimize_tau_to_doubling(q, 4.0)
    assert statement.tau == 5.0
    assert statement.constant == pytest.approx(1.0 + 4.0 ** -5)


def test_vanishing_field_has_no_statement():
    q = QuasiDoublingCheck.from_masses(RADII, lambda rho: 0.0, TAUS)
    assert q.c_min() == [0.0] * len(TAUS)
    statement = optimize_tau_to_doubling(q, 2.0)
    assert not statement.emitted
    assert statement.flag == 'no_statement'


def test_parameter_checks(linear_check):
    with pytest.raises(ParameterError):
        optimize_tau_to_doubling(linear_check, 0.5)
    with pytest.raises(ParameterError):
        QuasiDoublingCheck.from_masses((0.2, 0.3, 0.8), half_disc_mass)
    with pytest.raises(ParameterError):
        QuasiDoublingCheck.from_masses(RADII, {'r': 1.0})


def test_masses_and_frequency(flat_report, flat_profile):
    assert flat_report.kappa == pytest.approx(4.0, rel=1e-8)
    assert flat_report.vanishing_order == pytest.approx(1.0, rel=1e-7)
    assert flat_report.N == pytest.approx(256.0, rel=1e-8)
    assert flat_report.flags == []
    np.testing.assert_allclose(flat_report.slopes(), 4.0, rtol=1e-7)
    for row in flat_report.doubling_constants():
        assert row['D'] == pytest.approx(1.0, rel=1e-8)

    chart = build_domain(flat_profile, 33)
    assert frequency(Expression('x2'), chart, (0.0, 0.0), 0.4, C=4.0) == pytest.approx(256.0,
                                                                                       rel=1e-8)


def test_masses_reject_bad_center(flat_profile):
    chart = build_domain(flat_profile, 33)
    with pytest.raises(ParameterError):
        measure_masses(Expression('x2'), chart, (0.0, 0.3), [0.1])
    with pytest.raises(ParameterError):
        measure_masses(Expression('x2'), chart, (0.0, 0.0), [])


def test_doubling_form(flat_report):
    fit = fit_doubling_constants(flat_report, 4.0)
    assert fit.A == pytest.approx(8.0, rel=1e-8)
    assert fit.k == pytest.approx(1.0 / 8.0, rel=1e-7)
    assert fit.exponent == pytest.approx(3.0, rel=1e-8)
    check = check_doubling_form(flat_report, fit)
    assert check['passed']
    assert check['limit'] == pytest.approx(0.1)
    assert check['checked_pairs'] == 1
    assert check_doubling_form(flat_report, fit, restrict=False)['passed']


def test_report_csv(tmp_path, flat_report):
    rows = read_csv(flat_report.write_csv(tmp_path / 'doubling.csv'))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [row['radius'] for row in rows] == [0.05, 0.1, 0.2, 0.4]
